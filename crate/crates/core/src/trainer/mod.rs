//! Training loop: episodes of fresh reference trajectories, epochs of random
//! sub-trajectory batches, Adam updates of the network parameters, and a
//! frozen validation set tracked per epoch.
//!
//! Counting convention: `n_macro` (N) and `sub_traj` (m) are macro-steps;
//! each macro-step is `stride` inner RK4/RK2 steps, reference states are
//! stored and costs evaluated at macro-steps only.

pub mod adam;
pub mod gradcheck;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::cost::{CostEvaluator, CostTerms, CostWeights};
use crate::datagen::{project_ic_to_fv, sample_training_ic};
use crate::dg::{rk4_step, DgState};
use crate::equations::EquationSpec;
use crate::error::{Error, Result};
use crate::fv::{reference_rollout, FvMesh, FvState, Projector};
use crate::mesh::{Boundary, DgMesh};
use crate::rng::Rng;
use crate::viscosity::{NetConfig, NeuralViscosity, Viscosity};

pub use adam::Adam;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// "advection" | "burgers" | "euler". Training always runs on [0, 1]
    /// with periodic boundaries.
    pub equation: String,
    pub advection_speed: f64,
    pub gamma: f64,
    pub n_x: usize,
    pub p: usize,
    pub n_ref: usize,
    /// Shared timestep of the DG scheme and the FV reference.
    pub dt: f64,
    /// N: reference trajectory length in macro-steps.
    pub n_macro: usize,
    /// m: sub-trajectory length in macro-steps.
    pub sub_traj: usize,
    /// Inner steps per macro-step.
    pub stride: usize,
    /// K: fresh initial conditions per episode.
    pub ics_per_episode: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub episodes: usize,
    pub omega_osc: f64,
    pub omega_acc: f64,
    pub omega_visc: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub validation_ics: usize,
    pub validation_subs: usize,
    /// Added to J when a training sub-trajectory goes unstable; the batch
    /// continues with that trajectory contributing no gradient.
    pub instability_penalty: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            equation: "advection".into(),
            advection_speed: 1.0,
            gamma: 1.4,
            n_x: 32,
            p: 4,
            n_ref: 2048,
            dt: 1e-5,
            n_macro: 4096,
            sub_traj: 512,
            stride: 8,
            ics_per_episode: 8,
            batches_per_epoch: 20,
            batch_size: 16,
            episodes: 5,
            omega_osc: 1e-5,
            omega_acc: 0.0,
            omega_visc: 2e3,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            validation_ics: 2,
            validation_subs: 8,
            instability_penalty: 1e3,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn equation_spec(&self) -> Result<EquationSpec> {
        let eq = match self.equation.as_str() {
            "advection" => EquationSpec::Advection { speed: self.advection_speed },
            "burgers" => EquationSpec::Burgers,
            "euler" => EquationSpec::Euler { gamma: self.gamma },
            other => return Err(Error::Config(format!("unknown equation '{other}'"))),
        };
        eq.validate()?;
        Ok(eq)
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::new(self.omega_osc, self.omega_acc, self.omega_visc)
    }

    pub fn validate(&self) -> Result<()> {
        self.equation_spec()?;
        self.weights()?;
        if self.sub_traj > self.n_macro {
            return Err(Error::Config(format!(
                "sub-trajectory length {} exceeds trajectory length {}",
                self.sub_traj, self.n_macro
            )));
        }
        if self.n_ref % self.n_x != 0 {
            return Err(Error::Config(format!(
                "n_ref = {} must be a multiple of n_x = {}",
                self.n_ref, self.n_x
            )));
        }
        if self.stride == 0
            || self.batch_size == 0
            || self.batches_per_epoch == 0
            || self.ics_per_episode == 0
            || self.validation_subs == 0
            || self.validation_ics == 0
            || self.workers == 0
        {
            return Err(Error::Config("counts must be positive".into()));
        }
        if self.dt <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config("dt and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch log entry. Episode 0 is the pre-training validation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub episode: usize,
    pub train_loss: f64,
    pub val_total: f64,
    pub val_osc: f64,
    pub val_acc: f64,
    pub val_visc: f64,
    pub unstable: usize,
}

pub struct TrainOutcome {
    pub net: NeuralViscosity,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn initial_validation(&self) -> f64 {
        self.history.first().map(|r| r.val_total).unwrap_or(f64::NAN)
    }

    pub fn final_validation(&self) -> f64 {
        self.history.last().map(|r| r.val_total).unwrap_or(f64::NAN)
    }

    pub fn history_csv(&self) -> String {
        let mut out =
            String::from("episode,train_loss,val_total,val_osc,val_acc,val_visc,unstable\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.episode, r.train_loss, r.val_total, r.val_osc, r.val_acc, r.val_visc, r.unstable
            ));
        }
        out
    }
}

struct SubTrajOutput {
    grads: Vec<Vec<f64>>,
    loss: f64,
    unstable: bool,
}

/// One sub-trajectory: start from the reference state at macro index `n`,
/// roll `m` macro-steps with the (bound) network viscosity, accumulate the
/// step costs against the stored reference states.
pub fn sub_trajectory_loss(
    tape: &Tape,
    mesh: &DgMesh,
    eq: &EquationSpec,
    evaluator: &CostEvaluator,
    net: &NeuralViscosity,
    reference: &[FvState],
    n: usize,
    m: usize,
    stride: usize,
    dt: f64,
) -> Result<(Tensor, CostTerms)> {
    let start = sub_trajectory_start(tape, evaluator.projector, eq, &reference[n])?;
    let mut state = start;
    let mut states = Vec::with_capacity(m);
    let mut mus = Vec::with_capacity(m);
    let mut refs = Vec::with_capacity(m);
    for i in 1..=m {
        for _ in 0..stride {
            state = rk4_step(tape, mesh, eq, &state, net, dt)?;
        }
        mus.push(net.mu(tape, mesh, eq, &state.u)?);
        states.push(state.clone());
        let r = &reference[n + i];
        refs.push(Tensor::from_vec(vec![eq.n_vars(), evaluator.projector.n_fine], r.u.clone()));
    }
    evaluator.trajectory_cost(tape, &states, &mus, &refs)
}

/// Least-squares fit of the stored fine-grid reference averages onto the DG
/// polynomial space; the start state of every sub-trajectory.
pub fn sub_trajectory_start(
    tape: &Tape,
    projector: &Projector,
    eq: &EquationSpec,
    reference: &FvState,
) -> Result<DgState> {
    let fine = Tensor::from_vec(vec![eq.n_vars(), projector.n_fine], reference.u.clone());
    let nodal = projector.fine_to_dg(tape, &fine)?;
    Ok(DgState::new(nodal, reference.t))
}

pub struct Trainer {
    pub config: TrainConfig,
    eq: EquationSpec,
    mesh: DgMesh,
    fv_mesh: FvMesh,
    projector: Projector,
    weights: CostWeights,
    pub net: NeuralViscosity,
    adam: Adam,
    rng: Rng,
    validation_refs: Vec<Vec<FvState>>,
    validation_picks: Vec<(usize, usize)>,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let eq = config.equation_spec()?;
        let mesh = DgMesh::build(0.0, 1.0, config.n_x, config.p, Boundary::Periodic)?;
        let fv_mesh = FvMesh::new(0.0, 1.0, config.n_ref, Boundary::Periodic)?;
        let projector = Projector::new(&mesh, config.n_ref)?;
        let weights = config.weights()?;
        let mut rng = Rng::new(config.seed);
        let net = NeuralViscosity::init(NetConfig::new(eq.n_vars(), config.p), rng.next_u64());
        let adam = Adam::new(config.lr, config.beta1, config.beta2, &net.params);

        // Frozen validation set: dedicated initial conditions and start
        // indices, generated before any training episode so the episodes'
        // fresh random ICs can never coincide with it.
        let mut validation_refs = Vec::new();
        for _ in 0..config.validation_ics {
            let ic = sample_training_ic(&eq, &mut rng);
            let fv0 = project_ic_to_fv(&ic, &eq, &fv_mesh);
            validation_refs.push(reference_rollout(
                &eq,
                &fv_mesh,
                fv0,
                config.dt,
                config.n_macro,
                config.stride,
            )?);
        }
        let validation_picks = (0..config.validation_subs)
            .map(|_| {
                let k = rng.below(validation_refs.len());
                let n = rng.below(config.n_macro - config.sub_traj + 1);
                (k, n)
            })
            .collect();

        Ok(Trainer {
            config,
            eq,
            mesh,
            fv_mesh,
            projector,
            weights,
            net,
            adam,
            rng,
            validation_refs,
            validation_picks,
            history: Vec::new(),
        })
    }

    fn evaluator(&self) -> CostEvaluator<'_> {
        CostEvaluator::new(&self.mesh, &self.projector, self.weights)
    }

    /// J over the frozen validation set, no tape, no update.
    pub fn validation_loss(&self) -> (f64, CostTerms, usize) {
        let evaluator = self.evaluator();
        let mut total = 0.0;
        let mut terms = CostTerms::default();
        let mut unstable = 0;
        for &(k, n) in &self.validation_picks {
            let traj = &self.validation_refs[k];
            let tape = Tape::new();
            let out = tape.paused(|| {
                sub_trajectory_loss(
                    &tape,
                    &self.mesh,
                    &self.eq,
                    &evaluator,
                    &self.net,
                    traj,
                    n,
                    self.config.sub_traj,
                    self.config.stride,
                    self.config.dt,
                )
            });
            match out {
                Ok((loss, t)) => {
                    total += loss.item();
                    terms.add(&t);
                }
                Err(Error::Unstable { .. }) => {
                    total += self.config.instability_penalty;
                    unstable += 1;
                }
                Err(_) => unreachable!("non-instability failure in validation"),
            }
        }
        (total, terms, unstable)
    }

    fn run_sub_trajectory(&self, traj: &[FvState], n: usize) -> SubTrajOutput {
        let evaluator = self.evaluator();
        let zero_grads = || {
            self.net
                .params
                .tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect::<Vec<_>>()
        };
        let tape = Tape::new();
        let bound = self.net.bind(&tape);
        let out = sub_trajectory_loss(
            &tape,
            &self.mesh,
            &self.eq,
            &evaluator,
            &bound,
            traj,
            n,
            self.config.sub_traj,
            self.config.stride,
            self.config.dt,
        );
        match out {
            Ok((loss, _terms)) => {
                let value = loss.item();
                let grads = tape.backward(&loss).expect("fresh tape");
                let grads = bound
                    .params
                    .tensors()
                    .iter()
                    .map(|(_, t)| grads.get(t).expect("bound param").data().to_vec())
                    .collect();
                SubTrajOutput { grads, loss: value, unstable: false }
            }
            Err(Error::Unstable { step, time, reason }) => {
                eprintln!(
                    "unstable training sub-trajectory (start {n}, step {step}, t = {time:.4}): \
                     {reason}; applying penalty"
                );
                SubTrajOutput {
                    grads: zero_grads(),
                    loss: self.config.instability_penalty,
                    unstable: true,
                }
            }
            Err(e) => panic!("sub-trajectory failed: {e}"),
        }
    }

    /// One episode: fresh ICs, fresh reference rollouts, then
    /// `batches_per_epoch` batched gradient updates.
    pub fn run_episode(&mut self) -> Result<EpochRecord> {
        let episode = self.history.len(); // history[0] is the initial validation
        let k = self.config.ics_per_episode;

        // Reference trajectories for this episode's initial conditions.
        let mut references = Vec::with_capacity(k);
        for _ in 0..k {
            let ic = sample_training_ic(&self.eq, &mut self.rng);
            let fv0 = project_ic_to_fv(&ic, &self.eq, &self.fv_mesh);
            references.push(reference_rollout(
                &self.eq,
                &self.fv_mesh,
                fv0,
                self.config.dt,
                self.config.n_macro,
                self.config.stride,
            )?);
        }

        let mut train_loss = 0.0;
        let mut unstable = 0;
        for _ in 0..self.config.batches_per_epoch {
            // Draw the whole batch up front so the random stream does not
            // depend on worker scheduling.
            let picks: Vec<(usize, usize)> = (0..self.config.batch_size)
                .map(|_| {
                    let ic = self.rng.below(k);
                    let n = self.rng.below(self.config.n_macro - self.config.sub_traj + 1);
                    (ic, n)
                })
                .collect();
            let outputs = self.run_batch(&references, &picks);

            let mut grad_sum: Vec<Vec<f64>> = self
                .net
                .params
                .tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect();
            for out in &outputs {
                train_loss += out.loss;
                if out.unstable {
                    unstable += 1;
                }
                for (acc, g) in grad_sum.iter_mut().zip(&out.grads) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
            self.adam.step(&mut self.net.params, &grad_sum);
        }

        let (val_total, val_terms, _) = self.validation_loss();
        let record = EpochRecord {
            episode: episode.max(1),
            train_loss,
            val_total,
            val_osc: val_terms.osc,
            val_acc: val_terms.acc,
            val_visc: val_terms.visc,
            unstable,
        };
        self.history.push(record);
        Ok(record)
    }

    /// Run the batch, possibly on several workers; outputs keep the pick
    /// order, so gradient reduction is bitwise independent of `workers`.
    fn run_batch(&self, references: &[Vec<FvState>], picks: &[(usize, usize)]) -> Vec<SubTrajOutput> {
        let workers = self.config.workers.min(picks.len());
        if workers <= 1 {
            return picks
                .iter()
                .map(|&(ic, n)| self.run_sub_trajectory(&references[ic], n))
                .collect();
        }
        let mut slots: Vec<Option<SubTrajOutput>> = (0..picks.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let chunks: Vec<_> = slots.iter_mut().enumerate().collect();
            let mut handles = Vec::new();
            for (w, chunk) in split_round_robin(chunks, workers).into_iter().enumerate() {
                let trainer = &*self;
                handles.push(scope.spawn(move || {
                    let _ = w;
                    for (idx, slot) in chunk {
                        let (ic, n) = picks[idx];
                        *slot = Some(trainer.run_sub_trajectory(&references[ic], n));
                    }
                }));
            }
            for h in handles {
                h.join().expect("worker panicked");
            }
        });
        slots.into_iter().map(|s| s.expect("all slots filled")).collect()
    }

    /// Full training: initial validation, then the configured number of
    /// episodes. When `out_dir` is given, a checkpoint per episode and the
    /// loss-history CSV are written there.
    pub fn train(mut self, out_dir: Option<&Path>) -> Result<TrainOutcome> {
        let (val0, terms0, _) = self.validation_loss();
        self.history.push(EpochRecord {
            episode: 0,
            train_loss: f64::NAN,
            val_total: val0,
            val_osc: terms0.osc,
            val_acc: terms0.acc,
            val_visc: terms0.visc,
            unstable: 0,
        });
        for e in 1..=self.config.episodes {
            let record = self.run_episode()?;
            eprintln!(
                "episode {e}: train J = {:.4e}, validation J = {:.4e} \
                 (osc {:.3e}, acc {:.3e}, visc {:.3e}){}",
                record.train_loss,
                record.val_total,
                record.val_osc,
                record.val_acc,
                record.val_visc,
                if record.unstable > 0 {
                    format!(", {} unstable sub-trajectories", record.unstable)
                } else {
                    String::new()
                }
            );
            if let Some(dir) = out_dir {
                self.net.save(&dir.join(format!("checkpoint_ep{e}.bin")))?;
            }
        }
        let outcome = TrainOutcome { net: self.net, history: self.history };
        if let Some(dir) = out_dir {
            outcome.net.save(&dir.join("checkpoint.bin"))?;
            std::fs::write(dir.join("loss_history.csv"), outcome.history_csv())?;
        }
        Ok(outcome)
    }
}

fn split_round_robin<T>(items: Vec<T>, ways: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = (0..ways).map(|_| Vec::new()).collect();
    for (i, item) in items.into_iter().enumerate() {
        out[i % ways].push(item);
    }
    out
}
