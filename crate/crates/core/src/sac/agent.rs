//! Twin-critic soft actor-critic over per-mini-slot puncturing decisions.
//!
//! State of a mini-slot is `(s, k)`; the action is the puncturing vector `y`.
//! One shared actor serves every branch, with the branch index as an input
//! feature. Critics score `(s, k, y)` triples. The TTI reward arrives only at
//! the last mini-slot; earlier mini-slots bootstrap from the next one.

use std::io::{Read, Write};

use rand::Rng;

use super::buffer::{ExperienceRecord, ReplayBuffer};
use crate::enforcer::{apportion, kl_project, kl_project_vjp, RawPolicySample};
use crate::error::{Error, Result};
use crate::grid::{CellConfig, PuncturingVector, ScheduleVector};
use crate::neural::checkpoint::{expect_magic, read_params, read_u32, read_u64, write_params, write_u32, write_u64, FORMAT_VERSION};
use crate::neural::{action_to_scs, adam_step, sample_squashed, squashed_backward, AdamState, GaussianHead, Matrix, Mlp, Params, SquashedSample};
use crate::rng::SeedTree;

pub const AGENT_MAGIC: &[u8; 8] = b"PUNCTSAC";

/// Where the actor's gradient enters the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActorGradient {
    /// Critics score the raw proposal `b` in SC units.
    RawAction,
    /// Critics score the continuous KL projection of `b`, and the gradient is
    /// carried back through the projection with its active set held fixed.
    #[default]
    Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub discount: f64,
    pub entropy_coef: f64,
    pub batch_size: usize,
    pub soft_update_rate: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gradient: ActorGradient,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            discount: 0.95,
            entropy_coef: 0.2,
            batch_size: 256,
            soft_update_rate: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            buffer_capacity: 20_000,
            actor_hidden: vec![128],
            critic_hidden: vec![256, 256],
            gradient: ActorGradient::Projection,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad(format!("entropy coefficient {} must be finite and >= 0", self.entropy_coef));
        }
        if !(0.0..=1.0).contains(&self.soft_update_rate) {
            return bad(format!("soft update rate {} outside [0, 1]", self.soft_update_rate));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad(format!(
                "batch size {} must be positive and no larger than buffer capacity {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}

/// Problem dimensions the networks are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentDims {
    pub num_embb: usize,
    pub total_scs: usize,
    pub branch_count: usize,
    pub urllc_sc_len: usize,
}

impl AgentDims {
    pub fn from_cell(cell: &CellConfig) -> Self {
        Self {
            num_embb: cell.num_embb,
            total_scs: cell.total_scs,
            branch_count: cell.branch_count(),
            urllc_sc_len: cell.urllc_sc_len,
        }
    }

    pub fn actor_sizes(&self, hidden: &[usize]) -> Vec<usize> {
        let mut v = vec![self.num_embb + 1];
        v.extend_from_slice(hidden);
        v.push(2 * self.num_embb);
        v
    }

    pub fn critic_sizes(&self, hidden: &[usize]) -> Vec<usize> {
        let mut v = vec![2 * self.num_embb + 1];
        v.extend_from_slice(hidden);
        v.push(1);
        v
    }
}

/// Actor features `[n_1/N .. n_E/N, j/floor(N/L)]`.
pub fn actor_input(dims: &AgentDims, s: &ScheduleVector, branch: usize) -> Vec<f64> {
    let n = dims.total_scs as f64;
    let mut v: Vec<f64> = s.alloc.iter().map(|&x| x as f64 / n).collect();
    v.push(branch as f64 / dims.branch_count as f64);
    v
}

/// All branches of one schedule as columns, `j = 1..=floor(N/L)`.
pub fn branch_batch(dims: &AgentDims, s: &ScheduleVector) -> Matrix {
    let cols: Vec<Vec<f64>> = (1..=dims.branch_count).map(|j| actor_input(dims, s, j)).collect();
    Matrix::from_columns(&cols)
}

/// Critic features `[n/N, k/floor(N/L), m/N]`, length `2E + 1`.
pub fn critic_input(s: &ScheduleVector, k: usize, y: &PuncturingVector, total_scs: usize, branch_count: usize) -> Vec<f64> {
    let y: Vec<f64> = y.0.iter().map(|&m| m as f64).collect();
    critic_features(s, k, &y, total_scs, branch_count)
}

fn critic_features(s: &ScheduleVector, k: usize, y: &[f64], total_scs: usize, branch_count: usize) -> Vec<f64> {
    let n = total_scs as f64;
    let mut v = Vec::with_capacity(2 * s.alloc.len() + 1);
    v.extend(s.alloc.iter().map(|&x| x as f64 / n));
    v.push(k as f64 / branch_count as f64);
    v.extend(y.iter().map(|&m| m / n));
    v
}

/// `target <- rate * main + (1 - rate) * target`.
pub fn soft_update(target: &mut Mlp, main: &Mlp, rate: f64) -> Result<()> {
    target.soft_update_from(main, rate)
}

/// How a codebook turns a head into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionMode {
    #[default]
    Sample,
    /// `a = tanh(mu)`, no noise drawn.
    Mean,
}

/// Loss and objective values observed by one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: [f64; 2],
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    dims: AgentDims,
    cfg: SacConfig,
    actor: Mlp,
    critics: [Mlp; 2],
    targets: [Mlp; 2],
    actor_opt: AdamState,
    critic_opt: [AdamState; 2],
}

impl SacAgent {
    pub fn new(dims: AgentDims, cfg: SacConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        if dims.num_embb == 0 || dims.branch_count == 0 || dims.total_scs == 0 {
            return Err(Error::Config("agent dimensions must be positive".into()));
        }
        let actor = Mlp::new(&dims.actor_sizes(&cfg.actor_hidden), &mut seeds.stream("init-actor", &[]));
        let critic_sizes = dims.critic_sizes(&cfg.critic_hidden);
        let c0 = Mlp::new(&critic_sizes, &mut seeds.stream("init-critic", &[0]));
        let c1 = Mlp::new(&critic_sizes, &mut seeds.stream("init-critic", &[1]));
        Ok(Self::assemble(dims, cfg, actor, [c0, c1]))
    }

    fn assemble(dims: AgentDims, cfg: SacConfig, actor: Mlp, critics: [Mlp; 2]) -> Self {
        let targets = [Mlp::from_params(critics[0].params().clone()), Mlp::from_params(critics[1].params().clone())];
        let actor_opt = AdamState::for_network(&actor, cfg.actor_lr);
        let critic_opt = [AdamState::for_network(&critics[0], cfg.critic_lr), AdamState::for_network(&critics[1], cfg.critic_lr)];
        Self { dims, cfg, actor, critics, targets, actor_opt, critic_opt }
    }

    /// Agent around given networks; targets start as copies of the critics.
    pub fn from_networks(dims: AgentDims, cfg: SacConfig, actor: Mlp, critics: [Mlp; 2]) -> Result<Self> {
        cfg.validate()?;
        let agent = Self::assemble(dims, cfg, actor, critics);
        agent.check_shapes()?;
        Ok(agent)
    }

    fn check_shapes(&self) -> Result<()> {
        let e = self.dims.num_embb;
        let ok_actor = self.actor.input_size() == e + 1 && self.actor.output_size() == 2 * e;
        let ok_critics = self
            .critics
            .iter()
            .chain(&self.targets)
            .all(|c| c.input_size() == 2 * e + 1 && c.output_size() == 1);
        if !ok_actor || !ok_critics || self.critics[0].sizes() != self.targets[0].sizes() {
            return Err(Error::Shape(format!("networks do not match {e} eMBB users")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &AgentDims {
        &self.dims
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    /// Replaces hyperparameters that do not affect network shapes.
    pub fn set_config(&mut self, cfg: SacConfig) -> Result<()> {
        cfg.validate()?;
        self.actor_opt.lr = cfg.actor_lr;
        for o in &mut self.critic_opt {
            o.lr = cfg.critic_lr;
        }
        self.cfg = cfg;
        Ok(())
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic(&self, i: usize) -> &Mlp {
        &self.critics[i]
    }

    pub fn critic_mut(&mut self, i: usize) -> &mut Mlp {
        &mut self.critics[i]
    }

    pub fn target(&self, i: usize) -> &Mlp {
        &self.targets[i]
    }

    pub fn target_mut(&mut self, i: usize) -> &mut Mlp {
        &mut self.targets[i]
    }

    /// Gaussian heads for every branch of `s`, from one batched forward pass.
    pub fn branch_heads(&self, s: &ScheduleVector) -> Result<Vec<GaussianHead>> {
        self.check_schedule(s)?;
        let out = self.actor.predict(&branch_batch(&self.dims, s))?;
        (0..out.cols()).map(|j| GaussianHead::from_output(&out.column(j))).collect()
    }

    fn check_schedule(&self, s: &ScheduleVector) -> Result<()> {
        if s.alloc.len() != self.dims.num_embb {
            return Err(Error::Shape(format!("schedule has {} users, agent expects {}", s.alloc.len(), self.dims.num_embb)));
        }
        Ok(())
    }

    /// Draws (or takes the mean of) one head and runs it through the enforcer.
    pub fn act<R: Rng + ?Sized>(
        &self,
        head: &GaussianHead,
        s: &ScheduleVector,
        branch: usize,
        mode: ActionMode,
        rng: &mut R,
    ) -> Result<(PuncturingVector, SquashedSample)> {
        let sample = match mode {
            ActionMode::Sample => sample_squashed(head, rng),
            ActionMode::Mean => crate::neural::squash_with_noise(head, &vec![0.0; head.dim()]),
        };
        let b = action_to_scs(&sample.action, s)?;
        let demand = branch * self.dims.urllc_sc_len;
        let y = if demand == 0 {
            PuncturingVector::zeros(s.num_users())
        } else {
            let proj = kl_project(&b, &s.alloc, demand as f64)?;
            apportion(&proj.m_hat, &s.alloc, demand)?
        };
        Ok((y, sample))
    }

    /// Bootstrapped critic target for mini-slot `tau` of `rec`.
    pub fn compute_target<R: Rng + ?Sized>(&self, rec: &ExperienceRecord, tau: usize, rng: &mut R) -> Result<f64> {
        Ok(self.compute_targets(&[(rec, tau)], rng)?[0])
    }

    /// Targets for many `(record, mini-slot)` pairs. Noise is drawn in item
    /// order, so the result equals calling [`Self::compute_target`] in sequence.
    pub fn compute_targets<R: Rng + ?Sized>(&self, items: &[(&ExperienceRecord, usize)], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; items.len()];
        let mut pending = Vec::new();
        for (i, &(rec, tau)) in items.iter().enumerate() {
            let m = rec.minislots();
            if tau >= m {
                return Err(Error::Contract(format!("mini-slot {tau} outside a {m}-slot record")));
            }
            if tau + 1 == m {
                out[i] = rec.reward;
            } else {
                pending.push((i, rec, rec.admitted[tau + 1]));
            }
        }
        if pending.is_empty() {
            return Ok(out);
        }
        let active: Vec<Vec<f64>> =
            pending.iter().filter(|p| p.2 > 0).map(|&(_, rec, k)| actor_input(&self.dims, &rec.schedule, k)).collect();
        let actor_out = if active.is_empty() { None } else { Some(self.actor.predict(&Matrix::from_columns(&active))?) };
        let mut cols = Vec::with_capacity(pending.len());
        let mut log_probs = Vec::with_capacity(pending.len());
        let mut a = 0;
        for &(_, rec, k) in &pending {
            if k == 0 {
                cols.push(critic_input(&rec.schedule, 0, &PuncturingVector::zeros(rec.schedule.num_users()), self.dims.total_scs, self.dims.branch_count));
                log_probs.push(0.0);
                continue;
            }
            let head = GaussianHead::from_output(&actor_out.as_ref().expect("active columns exist").column(a))?;
            a += 1;
            let (y, sample) = self.act(&head, &rec.schedule, k, ActionMode::Sample, rng)?;
            cols.push(critic_input(&rec.schedule, k, &y, self.dims.total_scs, self.dims.branch_count));
            log_probs.push(sample.log_prob);
        }
        let x = Matrix::from_columns(&cols);
        let q0 = self.targets[0].predict(&x)?;
        let q1 = self.targets[1].predict(&x)?;
        for (c, &(i, _, _)) in pending.iter().enumerate() {
            let q = q0.get(0, c).min(q1.get(0, c));
            out[i] = self.cfg.discount * (q - self.cfg.entropy_coef * log_probs[c]);
        }
        Ok(out)
    }

    /// Critic input matrix for every (record, mini-slot) pair, in record-major order.
    pub fn critic_batch(&self, batch: &[&ExperienceRecord]) -> Matrix {
        let cols: Vec<Vec<f64>> = batch
            .iter()
            .flat_map(|rec| {
                (0..rec.minislots()).map(move |tau| {
                    critic_input(&rec.schedule, rec.admitted[tau], &rec.punctures[tau], self.dims.total_scs, self.dims.branch_count)
                })
            })
            .collect();
        Matrix::from_columns(&cols)
    }

    /// Mean squared errors of both critics on `x` and their parameter gradients.
    pub fn critic_gradients(&self, x: &Matrix, targets: &[f64]) -> Result<([f64; 2], [Params; 2])> {
        if x.cols() != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!("{} critic inputs but {} targets", x.cols(), targets.len())));
        }
        let n = targets.len() as f64;
        let mut losses = [0.0; 2];
        let mut grads: Vec<Params> = Vec::with_capacity(2);
        for (i, critic) in self.critics.iter().enumerate() {
            let (q, cache) = critic.forward(x)?;
            let mut g = Matrix::zeros(1, targets.len());
            for (c, &t) in targets.iter().enumerate() {
                let d = q.get(0, c) - t;
                losses[i] += d * d / n;
                g.set(0, c, 2.0 * d / n);
            }
            grads.push(critic.backward(&cache, &g)?.0);
        }
        let g1 = grads.pop().expect("two critics");
        let g0 = grads.pop().expect("two critics");
        Ok((losses, [g0, g1]))
    }

    /// One Adam step per critic toward fixed `targets`; returns pre-step losses.
    pub fn critic_step(&mut self, x: &Matrix, targets: &[f64]) -> Result<[f64; 2]> {
        let (losses, grads) = self.critic_gradients(x, targets)?;
        for ((critic, g), opt) in self.critics.iter_mut().zip(&grads).zip(&mut self.critic_opt) {
            adam_step(critic, g, opt)?;
        }
        Ok(losses)
    }

    /// Regression of both critics onto bootstrapped targets over all `H * M` pairs.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &[&ExperienceRecord], rng: &mut R) -> Result<[f64; 2]> {
        let items: Vec<(&ExperienceRecord, usize)> =
            batch.iter().flat_map(|&rec| (0..rec.minislots()).map(move |tau| (rec, tau))).collect();
        let targets = self.compute_targets(&items, rng)?;
        let x = self.critic_batch(batch);
        self.critic_step(&x, &targets)
    }

    /// Actor objective `(1/(H M)) sum [min_i Q_i - zeta log pi]` over the batch
    /// and its gradient with respect to the actor parameters. Mini-slots with
    /// no admitted packet play the fixed zero action and are left out, since
    /// they do not depend on the actor.
    pub fn actor_gradient<R: Rng + ?Sized>(&self, batch: &[&ExperienceRecord], rng: &mut R) -> Result<(f64, Params)> {
        let items: Vec<(&ExperienceRecord, usize)> = batch
            .iter()
            .flat_map(|&rec| (0..rec.minislots()).filter(move |&tau| rec.admitted[tau] > 0).map(move |tau| (rec, tau)))
            .collect();
        let norm = batch.iter().map(|r| r.minislots()).sum::<usize>().max(1) as f64;
        let mut grads = Params::zeros(&self.actor.sizes());
        if items.is_empty() {
            return Ok((0.0, grads));
        }
        let e = self.dims.num_embb;
        let n = self.dims.total_scs as f64;
        let zeta = self.cfg.entropy_coef;
        let x: Vec<Vec<f64>> = items.iter().map(|&(rec, tau)| actor_input(&self.dims, &rec.schedule, rec.admitted[tau])).collect();
        let (out, cache) = self.actor.forward(&Matrix::from_columns(&x))?;

        struct Column {
            head: GaussianHead,
            sample: SquashedSample,
            b: Vec<f64>,
            proj: Option<crate::enforcer::ContinuousProjection>,
        }
        let mut columns = Vec::with_capacity(items.len());
        let mut critic_cols = Vec::with_capacity(items.len());
        for (c, &(rec, tau)) in items.iter().enumerate() {
            let k = rec.admitted[tau];
            let head = GaussianHead::from_output(&out.column(c))?;
            let sample = sample_squashed(&head, rng);
            let b = action_to_scs(&sample.action, &rec.schedule)?.0;
            let (m, proj) = match self.cfg.gradient {
                ActorGradient::RawAction => (b.clone(), None),
                ActorGradient::Projection => {
                    let proj = kl_project(&RawPolicySample(b.clone()), &rec.schedule.alloc, (k * self.dims.urllc_sc_len) as f64)?;
                    (proj.m_hat.clone(), Some(proj))
                }
            };
            critic_cols.push(critic_features(&rec.schedule, k, &m, self.dims.total_scs, self.dims.branch_count));
            columns.push(Column { head, sample, b, proj });
        }
        let xq = Matrix::from_columns(&critic_cols);
        let (q0, cache0) = self.critics[0].forward(&xq)?;
        let (q1, cache1) = self.critics[1].forward(&xq)?;
        let mut g0 = Matrix::zeros(1, items.len());
        let mut g1 = Matrix::zeros(1, items.len());
        let mut objective = 0.0;
        for (c, col) in columns.iter().enumerate() {
            let (a, b) = (q0.get(0, c), q1.get(0, c));
            if a <= b {
                g0.set(0, c, 1.0 / norm);
            } else {
                g1.set(0, c, 1.0 / norm);
            }
            objective += (a.min(b) - zeta * col.sample.log_prob) / norm;
        }
        let (_, gin0) = self.critics[0].backward(&cache0, &g0)?;
        let (_, gin1) = self.critics[1].backward(&cache1, &g1)?;

        let mut grad_out = Matrix::zeros(2 * e, items.len());
        for (c, (col, &(rec, _))) in columns.iter().zip(&items).enumerate() {
            let dq_dm: Vec<f64> = (0..e).map(|i| (gin0.get(e + 1 + i, c) + gin1.get(e + 1 + i, c)) / n).collect();
            let dq_db = match &col.proj {
                None => dq_dm,
                Some(proj) => kl_project_vjp(&col.b, &rec.schedule.alloc, proj, &dq_dm),
            };
            let dq_da: Vec<f64> = dq_db.iter().zip(&rec.schedule.alloc).map(|(g, &n_e)| g * 0.5 * n_e as f64).collect();
            let g = squashed_backward(&col.head, &col.sample, &dq_da, -zeta / norm);
            for (r, v) in g.into_iter().enumerate() {
                grad_out.set(r, c, v);
            }
        }
        grads = self.actor.backward(&cache, &grad_out)?.0;
        Ok((objective, grads))
    }

    /// One Adam ascent step on the actor; critics are untouched.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &[&ExperienceRecord], rng: &mut R) -> Result<f64> {
        let (objective, mut grads) = self.actor_gradient(batch, rng)?;
        grads.scale(-1.0);
        adam_step(&mut self.actor, &grads, &mut self.actor_opt)?;
        Ok(objective)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let rate = self.cfg.soft_update_rate;
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            soft_update(t, c, rate)?;
        }
        Ok(())
    }

    /// Critic step, actor step and target tracking on one sampled batch;
    /// `None` while the buffer holds fewer than `H` records.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<Option<TrainStats>> {
        let Some(batch) = buffer.sample(self.cfg.batch_size, rng) else {
            return Ok(None);
        };
        let critic_loss = self.critic_update(&batch, rng)?;
        let actor_objective = self.actor_update(&batch, rng)?;
        self.soft_update_targets()?;
        Ok(Some(TrainStats { critic_loss, actor_objective }))
    }

    /// Serializes networks and optimizer states.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(AGENT_MAGIC).map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_u32(w, FORMAT_VERSION)?;
        for d in [self.dims.num_embb, self.dims.total_scs, self.dims.branch_count, self.dims.urllc_sc_len] {
            write_u32(w, d as u32)?;
        }
        write_params(w, self.actor.params())?;
        for net in self.critics.iter().chain(&self.targets) {
            write_params(w, net.params())?;
        }
        for opt in std::iter::once(&self.actor_opt).chain(&self.critic_opt) {
            write_u64(w, opt.step)?;
            write_params(w, &opt.first)?;
            write_params(w, &opt.second)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Restores an agent; hyperparameters come from `cfg`, shapes from the file.
    pub fn read_from<R: Read>(r: &mut R, cfg: SacConfig) -> Result<Self> {
        expect_magic(r, AGENT_MAGIC)?;
        let mut d = [0usize; 4];
        for v in &mut d {
            *v = read_u32(r)? as usize;
        }
        let dims = AgentDims { num_embb: d[0], total_scs: d[1], branch_count: d[2], urllc_sc_len: d[3] };
        let actor = Mlp::from_params(read_params(r)?);
        let mut nets = Vec::with_capacity(4);
        for _ in 0..4 {
            nets.push(Mlp::from_params(read_params(r)?));
        }
        let mut opts = Vec::with_capacity(3);
        for (i, lr) in [cfg.actor_lr, cfg.critic_lr, cfg.critic_lr].into_iter().enumerate() {
            let step = read_u64(r)?;
            let first = read_params(r)?;
            let second = read_params(r)?;
            let shape = if i == 0 { actor.sizes() } else { nets[i - 1].sizes() };
            if first.sizes() != shape || second.sizes() != shape {
                return Err(Error::Checkpoint("optimizer state does not match its network".into()));
            }
            opts.push(AdamState { first, second, step, ..AdamState::new(&shape, lr) });
        }
        let mut it = nets.into_iter();
        let critics = [it.next().expect("four"), it.next().expect("four")];
        let targets = [it.next().expect("four"), it.next().expect("four")];
        let mut ot = opts.into_iter();
        let actor_opt = ot.next().expect("three");
        let critic_opt = [ot.next().expect("three"), ot.next().expect("three")];
        cfg.validate()?;
        let agent = Self { dims, cfg, actor, critics, targets, actor_opt, critic_opt };
        agent.check_shapes().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(agent)
    }

    /// Bit-level equality of every network and optimizer state.
    pub fn same_state(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.actor == other.actor
            && self.critics == other.critics
            && self.targets == other.targets
            && self.actor_opt == other.actor_opt
            && self.critic_opt == other.critic_opt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enforcer::enforce;

    fn dims() -> AgentDims {
        AgentDims { num_embb: 2, total_scs: 24, branch_count: 4, urllc_sc_len: 6 }
    }

    fn tiny_cfg() -> SacConfig {
        SacConfig {
            batch_size: 4,
            buffer_capacity: 16,
            actor_hidden: vec![4],
            critic_hidden: vec![4, 4],
            entropy_coef: 0.1,
            ..SacConfig::default()
        }
    }

    fn record(alloc: [usize; 2], admitted: [usize; 3], reward: f64) -> ExperienceRecord {
        let s = ScheduleVector::from_alloc(alloc.to_vec());
        let punctures = admitted
            .iter()
            .map(|&k| enforce(&RawPolicySample(vec![1.0, 2.0]), &s, k, 6).unwrap())
            .collect();
        ExperienceRecord { schedule: s, admitted: admitted.to_vec(), punctures, reward }
    }

    fn batch() -> Vec<ExperienceRecord> {
        vec![record([12, 12], [1, 0, 2], -0.5), record([24, 0], [0, 3, 1], -1.0), record([6, 18], [2, 1, 0], 0.0)]
    }

    #[test]
    fn critic_input_normalization() {
        let s = ScheduleVector::from_alloc(vec![780]);
        assert_eq!(critic_input(&s, 1, &PuncturingVector(vec![300]), 780, 2), vec![1.0, 0.5, 300.0 / 780.0]);
        let z = ScheduleVector::from_alloc(vec![0, 0, 0]);
        let v = critic_input(&z, 0, &PuncturingVector::zeros(3), 780, 2);
        assert_eq!(v, vec![0.0; 7]);
    }

    #[test]
    fn terminal_and_discount_free_targets() {
        let agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(1)).unwrap();
        let rec = record([12, 12], [1, 1, 1], -0.25);
        let mut rng = SeedTree::new(2).stream("t", &[]);
        assert_eq!(agent.compute_target(&rec, 2, &mut rng).unwrap(), -0.25);
        let cfg = SacConfig { discount: 0.0, ..tiny_cfg() };
        let agent = SacAgent::new(dims(), cfg, &SeedTree::new(1)).unwrap();
        for tau in 0..2 {
            assert_eq!(agent.compute_target(&rec, tau, &mut rng).unwrap(), 0.0);
        }
        assert!(agent.compute_target(&rec, 3, &mut rng).is_err());
    }

    #[test]
    fn entropy_free_target_is_discounted_min() {
        let cfg = SacConfig { entropy_coef: 0.0, ..tiny_cfg() };
        let agent = SacAgent::new(dims(), cfg, &SeedTree::new(5)).unwrap();
        let rec = record([12, 12], [1, 2, 0], -0.3);
        let rng = SeedTree::new(6).stream("t", &[]);
        let got = agent.compute_target(&rec, 0, &mut rng.clone()).unwrap();
        let head = agent.branch_heads(&rec.schedule).unwrap()[1].clone();
        let (y, _) = agent.act(&head, &rec.schedule, 2, ActionMode::Sample, &mut rng.clone()).unwrap();
        let x = Matrix::from_columns(&[critic_input(&rec.schedule, 2, &y, 24, 4)]);
        let q0 = agent.target(0).predict(&x).unwrap().get(0, 0);
        let q1 = agent.target(1).predict(&x).unwrap().get(0, 0);
        assert_eq!(got, 0.95 * q0.min(q1));
    }

    #[test]
    fn targets_are_pure_and_never_exceed_either_critic() {
        let agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(8)).unwrap();
        let recs = batch();
        let items: Vec<(&ExperienceRecord, usize)> = recs.iter().flat_map(|r| (0..3).map(move |t| (r, t))).collect();
        let rng = SeedTree::new(9).stream("t", &[]);
        let batched = agent.compute_targets(&items, &mut rng.clone()).unwrap();
        let mut seq_rng = rng.clone();
        let seq: Vec<f64> = items.iter().map(|&(r, t)| agent.compute_target(r, t, &mut seq_rng).unwrap()).collect();
        assert_eq!(batched, seq);
        assert_eq!(batched, agent.compute_targets(&items, &mut rng.clone()).unwrap());

        // replay the draws to recover each target's inputs
        let mut replay = rng.clone();
        for (&(rec, tau), &t) in items.iter().zip(&batched) {
            if tau == 2 {
                continue;
            }
            let k = rec.admitted[tau + 1];
            let (y, logp) = if k == 0 {
                (PuncturingVector::zeros(2), 0.0)
            } else {
                let head = agent.branch_heads(&rec.schedule).unwrap()[k - 1].clone();
                let (y, s) = agent.act(&head, &rec.schedule, k, ActionMode::Sample, &mut replay).unwrap();
                (y, s.log_prob)
            };
            let x = Matrix::from_columns(&[critic_input(&rec.schedule, k, &y, 24, 4)]);
            for i in 0..2 {
                let qi = agent.target(i).predict(&x).unwrap().get(0, 0);
                assert!(t <= 0.95 * (qi - 0.1 * logp) + 1e-15);
            }
        }
    }

    #[test]
    fn critic_step_at_fixed_point_is_identity() {
        let mut agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(3)).unwrap();
        let recs = batch();
        let refs: Vec<&ExperienceRecord> = recs.iter().collect();
        let x = agent.critic_batch(&refs);
        // both critics must sit on the targets, so make them identical first
        let p = agent.critic(0).params().clone();
        *agent.critic_mut(1).params_mut() = p;
        let q = agent.critic(0).predict(&x).unwrap();
        let before = agent.clone();
        let losses = agent.critic_step(&x, q.row(0)).unwrap();
        assert_eq!(losses, [0.0, 0.0]);
        assert_eq!(agent.critic(0), before.critic(0));
        assert_eq!(agent.critic(1), before.critic(1));
    }

    #[test]
    fn critic_regression_toward_constant_decreases() {
        let mut agent = SacAgent::new(dims(), SacConfig { critic_lr: 1e-2, ..tiny_cfg() }, &SeedTree::new(4)).unwrap();
        let recs = vec![record([12, 12], [1, 0, 2], -0.5)];
        let refs: Vec<&ExperienceRecord> = recs.iter().collect();
        let x = agent.critic_batch(&refs);
        let targets = vec![-0.7; x.cols()];
        let mut history = Vec::new();
        for _ in 0..100 {
            let l = agent.critic_step(&x, &targets).unwrap();
            assert!(l[0] >= 0.0 && l[1] >= 0.0);
            history.push(l[0] + l[1]);
        }
        assert!(history[99] < 0.1 * history[0], "{} -> {}", history[0], history[99]);
        // allow Adam transients but demand a downward trend over every 10-step window
        for w in history.chunks(10).collect::<Vec<_>>().windows(2) {
            assert!(w[1].iter().sum::<f64>() <= w[0].iter().sum::<f64>() * 1.01);
        }
    }

    #[test]
    fn actor_update_leaves_critics_alone() {
        let mut agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(10)).unwrap();
        let recs = batch();
        let refs: Vec<&ExperienceRecord> = recs.iter().collect();
        let before = agent.clone();
        agent.actor_update(&refs, &mut SeedTree::new(1).stream("a", &[])).unwrap();
        assert_ne!(agent.actor(), before.actor());
        for i in 0..2 {
            assert_eq!(agent.critic(i), before.critic(i));
            assert_eq!(agent.target(i), before.target(i));
        }
    }

    #[test]
    fn zero_critics_without_entropy_give_zero_gradient() {
        let cfg = SacConfig { entropy_coef: 0.0, ..tiny_cfg() };
        let seeds = SeedTree::new(12);
        let actor = Mlp::new(&dims().actor_sizes(&[4]), &mut seeds.stream("a", &[]));
        let zero = Mlp::zeros(&dims().critic_sizes(&[4, 4]));
        let agent = SacAgent::from_networks(dims(), cfg, actor, [zero.clone(), zero]).unwrap();
        let recs = batch();
        let refs: Vec<&ExperienceRecord> = recs.iter().collect();
        let (obj, g) = agent.actor_gradient(&refs, &mut seeds.stream("b", &[])).unwrap();
        assert_eq!(obj, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn large_entropy_coefficient_widens_the_policy() {
        let cfg = SacConfig { entropy_coef: 50.0, actor_lr: 1e-3, ..tiny_cfg() };
        let mut agent = SacAgent::new(dims(), cfg, &SeedTree::new(13)).unwrap();
        // start narrow: the squashed entropy peaks near sigma = 1, so a wide
        // start would legitimately shrink
        let last = agent.actor().params().layers.len() - 1;
        for b in &mut agent.actor_mut().params_mut().layers[last].bias[2..] {
            *b = -2.0;
        }
        let recs = batch();
        let refs: Vec<&ExperienceRecord> = recs.iter().collect();
        let mean_log_std = |a: &SacAgent| {
            let heads: Vec<GaussianHead> = recs.iter().flat_map(|r| a.branch_heads(&r.schedule).unwrap()).collect();
            let n = heads.len() * 2;
            heads.iter().flat_map(|h| (0..2).map(move |e| h.log_std(e))).sum::<f64>() / n as f64
        };
        let start = mean_log_std(&agent);
        let mut rng = SeedTree::new(14).stream("a", &[]);
        for _ in 0..200 {
            agent.actor_update(&refs, &mut rng).unwrap();
        }
        assert!(mean_log_std(&agent) > start + 0.1, "{start} -> {}", mean_log_std(&agent));
    }

    #[test]
    fn soft_update_rates() {
        let main = Mlp::from_params({
            let mut p = Params::zeros(&[1, 1]);
            p.set_flat(&[2.0, 2.0]);
            p
        });
        let mut t = Mlp::zeros(&[1, 1]);
        soft_update(&mut t, &main, 0.0).unwrap();
        assert_eq!(t.params().to_flat(), vec![0.0, 0.0]);
        soft_update(&mut t, &main, 0.5).unwrap();
        assert_eq!(t.params().to_flat(), vec![1.0, 1.0]);
        soft_update(&mut t, &main, 1.0).unwrap();
        assert_eq!(t, main);
    }

    #[test]
    fn checkpoint_round_trip_after_training() {
        let mut agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(20)).unwrap();
        let mut buf = ReplayBuffer::new(16).unwrap();
        for r in batch() {
            buf.push(r.clone());
            buf.push(r);
        }
        let mut rng = SeedTree::new(21).stream("train", &[]);
        for _ in 0..3 {
            assert!(agent.train_step(&buf, &mut rng).unwrap().is_some());
        }
        let bytes = agent.to_bytes();
        let back = SacAgent::read_from(&mut bytes.as_slice(), tiny_cfg()).unwrap();
        assert!(back.same_state(&agent));
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert!(matches!(SacAgent::read_from(&mut bad.as_slice(), tiny_cfg()), Err(Error::Checkpoint(_))));
        assert!(SacAgent::read_from(&mut &bytes[..bytes.len() / 2], tiny_cfg()).is_err());
    }

    #[test]
    fn underfilled_buffer_defers_training() {
        let mut agent = SacAgent::new(dims(), tiny_cfg(), &SeedTree::new(22)).unwrap();
        let mut buf = ReplayBuffer::new(16).unwrap();
        buf.push(batch().remove(0));
        let before = agent.clone();
        assert!(agent.train_step(&buf, &mut SeedTree::new(1).stream("x", &[])).unwrap().is_none());
        assert!(agent.same_state(&before));
    }
}
