//! Convex-splitting time integration of the two-field (φ, μ) mixed system.
//!
//! First order (convex part implicit, concave part explicit):
//!
//! ```text
//! R_φ = M(φ⁺ − φⁿ)/Δt + Kμ
//! R_μ = Mμ − b(φ⁺³) − (1−ε)Mφ⁺ − Aφ⁺ + 2Kφⁿ
//! ```
//!
//! Second order (secant quartic, midpoint linear convex terms, extrapolated
//! concave term):
//!
//! ```text
//! R_φ = M(φ⁺ − φⁿ)/Δt + Kμ
//! R_μ = Mμ − b_χ(φ⁺, φⁿ) − (1−ε)M(φ⁺+φⁿ)/2 − A(φ⁺+φⁿ)/2 + 2Kψ
//! ψ   = φⁿ + (r/2)(φⁿ − φⁿ⁻¹),   r = Δt/Δt_prev   (ψ = 3/2 φⁿ − 1/2 φⁿ⁻¹ for r = 1)
//! ```
//!
//! Since `𝟙ᵀK = 0`, `R_φ = 0` conserves `𝟙ᵀMφ` exactly.

use log::warn;

use crate::assembly::{
    assemble_nonlinear_load, assemble_weighted_mass_into, check_len, FieldState, Operators,
};
use crate::error::{Error, Result};
use crate::linsolve::{BlockJacobian, BlockSolver, LowerBlockModel};
use crate::model::{chi_secant, chi_secant_da, free_energy_of, mass, EnergyReport, ModelParams, SchemeOrder};
use crate::space::TensorSpace;
use crate::sparse::SparseMatrix;

/// Slack on the per-step energy decrease.
pub const ENERGY_SLACK: f64 = 1e-10;
/// Relative tolerance on per-step mass change.
pub const MASS_TOLERANCE: f64 = 1e-11;
/// Step halvings attempted after a Newton failure.
pub const MAX_RETRIES: usize = 8;

/// What to do when a step increases the energy or loses mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationPolicy {
    /// Fail the step (test mode).
    Abort,
    /// Log and continue (production mode).
    Warn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    /// Time step actually taken (after any halving); 0 for the initial record.
    pub dt: f64,
    pub energy: EnergyReport,
    pub mass: f64,
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub linear_iterations: usize,
}

/// Time levels carried between steps.
#[derive(Clone, Debug)]
pub struct History {
    pub current: FieldState,
    pub previous: Option<FieldState>,
    /// Chemical potential from the last solve; Newton's initial μ.
    pub mu: Vec<f64>,
}

impl History {
    pub fn new(initial: FieldState) -> Self {
        let mu = vec![0.0; initial.coefficients.len()];
        Self {
            current: initial,
            previous: None,
            mu,
        }
    }

    fn previous_dt(&self) -> Option<f64> {
        self.previous.as_ref().map(|p| self.current.time - p.time)
    }
}

/// Result of a Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norms, starting with the initial one.
    pub residuals: Vec<f64>,
    pub linear_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    /// Keep a snapshot every `stride` steps (0 = only initial and final).
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    /// One record per accepted step, preceded by the initial state.
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<FieldState>,
    pub final_state: Option<FieldState>,
    /// Largest single-step energy increase seen (≤ 0 when dissipative).
    pub max_energy_increase: f64,
    pub energy_violations: usize,
    pub step_halvings: usize,
}

/// A run that could not continue; `partial` holds everything up to the
/// failing step.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunOutput,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} accepted steps)",
            self.error,
            self.partial.diagnostics.len().saturating_sub(1)
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub struct Integrator {
    space: TensorSpace,
    params: ModelParams,
    ops: Operators,
    solver: BlockSolver,
    jac_work: SparseMatrix,
    policy: ViolationPolicy,
}

enum Scheme<'h> {
    First { phi_n: &'h [f64] },
    Second { phi_n: &'h [f64], psi: Vec<f64> },
}

impl Integrator {
    pub fn new(params: ModelParams, policy: ViolationPolicy) -> Result<Self> {
        let space = params.space()?;
        let ops = Operators::assemble(&space)?;
        let solver = BlockSolver::new(&space, &ops, params.linear_solver, params.linear_tol);
        let jac_work = SparseMatrix::zeros(ops.pattern().clone());
        Ok(Self {
            space,
            params,
            ops,
            solver,
            jac_work,
            policy,
        })
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn set_policy(&mut self, policy: ViolationPolicy) {
        self.policy = policy;
    }

    pub fn energy(&self, coeffs: &[f64]) -> Result<EnergyReport> {
        free_energy_of(&self.space, self.params.epsilon, coeffs)
    }

    pub fn mass(&self, coeffs: &[f64]) -> f64 {
        mass(&self.ops.integrals, coeffs)
    }

    fn extrapolated_concave(&self, history: &History, dt: f64) -> Result<Vec<f64>> {
        let prev = history.previous.as_ref().ok_or(Error::MissingHistory)?;
        let dt_prev = history.previous_dt().filter(|d| *d > 0.0).unwrap_or(dt);
        let half_r = 0.5 * dt / dt_prev;
        Ok(history
            .current
            .coefficients
            .iter()
            .zip(&prev.coefficients)
            .map(|(n, p)| n + half_r * (n - p))
            .collect())
    }

    fn check_inputs(&self, phi_plus: &[f64], mu: &[f64], dt: f64) -> Result<()> {
        check_len(&self.space, phi_plus)?;
        check_len(&self.space, mu)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        Ok(())
    }

    /// First-order convex-splitting residual `(R_φ, R_μ)`.
    pub fn residual_first_order(
        &self,
        phi_n: &[f64],
        phi_plus: &[f64],
        mu: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_inputs(phi_plus, mu, dt)?;
        check_len(&self.space, phi_n)?;
        Ok(self.residual(&Scheme::First { phi_n }, phi_plus, mu, dt))
    }

    /// Second-order convex-splitting residual `(R_φ, R_μ)`.
    pub fn residual_second_order(
        &self,
        history: &History,
        phi_plus: &[f64],
        mu: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_inputs(phi_plus, mu, dt)?;
        let psi = self.extrapolated_concave(history, dt)?;
        let scheme = Scheme::Second {
            phi_n: &history.current.coefficients,
            psi,
        };
        Ok(self.residual(&scheme, phi_plus, mu, dt))
    }

    fn residual(&self, scheme: &Scheme, phi_plus: &[f64], mu: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
        let eps = self.params.epsilon;
        let ops = &self.ops;
        let n = phi_plus.len();
        let (phi_n, concave_arg) = match scheme {
            Scheme::First { phi_n } => (*phi_n, *phi_n),
            Scheme::Second { phi_n, psi } => (*phi_n, psi.as_slice()),
        };

        let diff: Vec<f64> = phi_plus.iter().zip(phi_n).map(|(a, b)| a - b).collect();
        let mut r_phi = vec![0.0; n];
        ops.mass.mul_vec_scaled(1.0 / dt, &diff, 0.0, &mut r_phi);
        ops.stiffness.mul_vec_scaled(1.0, mu, 1.0, &mut r_phi);

        let mut r_mu = vec![0.0; n];
        ops.mass.mul_vec(mu, &mut r_mu);
        match scheme {
            Scheme::First { .. } => {
                let load = assemble_nonlinear_load(&self.space, &[phi_plus], |v| v[0] * v[0] * v[0])
                    .expect("lengths checked");
                r_mu.iter_mut().zip(&load).for_each(|(r, b)| *r -= b);
                ops.mass.mul_vec_scaled(-(1.0 - eps), phi_plus, 1.0, &mut r_mu);
                ops.bilaplacian.mul_vec_scaled(-1.0, phi_plus, 1.0, &mut r_mu);
            }
            Scheme::Second { .. } => {
                let load =
                    assemble_nonlinear_load(&self.space, &[phi_plus, phi_n], |v| chi_secant(v[0], v[1]))
                        .expect("lengths checked");
                r_mu.iter_mut().zip(&load).for_each(|(r, b)| *r -= b);
                let mid: Vec<f64> = phi_plus.iter().zip(phi_n).map(|(a, b)| 0.5 * (a + b)).collect();
                ops.mass.mul_vec_scaled(-(1.0 - eps), &mid, 1.0, &mut r_mu);
                ops.bilaplacian.mul_vec_scaled(-1.0, &mid, 1.0, &mut r_mu);
            }
        }
        ops.stiffness.mul_vec_scaled(2.0, concave_arg, 1.0, &mut r_mu);
        (r_phi, r_mu)
    }

    /// Newton matrix of the second-order residual at `φ⁺`.
    pub fn jacobian_second_order(
        &mut self,
        history: &History,
        phi_plus: &[f64],
        dt: f64,
    ) -> Result<BlockJacobian<'_>> {
        check_len(&self.space, phi_plus)?;
        let phi_n = history.current.coefficients.clone();
        self.build_jacobian(
            &Scheme::Second {
                phi_n: &phi_n,
                psi: Vec::new(),
            },
            phi_plus,
            dt,
        )
    }

    /// Newton matrix of the first-order residual at `φ⁺`.
    pub fn jacobian_first_order(&mut self, phi_plus: &[f64], dt: f64) -> Result<BlockJacobian<'_>> {
        check_len(&self.space, phi_plus)?;
        self.build_jacobian(&Scheme::First { phi_n: &[] }, phi_plus, dt)
    }

    fn build_jacobian(&mut self, scheme: &Scheme, phi_plus: &[f64], dt: f64) -> Result<BlockJacobian<'_>> {
        let eps = self.params.epsilon;
        let (alpha, beta) = match scheme {
            Scheme::First { .. } => {
                assemble_weighted_mass_into(
                    &self.space,
                    &[phi_plus],
                    |v| 3.0 * v[0] * v[0],
                    &mut self.jac_work,
                )?;
                (1.0 - eps, 1.0)
            }
            Scheme::Second { phi_n, .. } => {
                assemble_weighted_mass_into(
                    &self.space,
                    &[phi_plus, phi_n],
                    |v| chi_secant_da(v[0], v[1]),
                    &mut self.jac_work,
                )?;
                (0.5 * (1.0 - eps), 0.5)
            }
        };
        let mean_coupling = self.jac_work.values().iter().sum::<f64>() / self.space.volume();
        let lower = SparseMatrix::combination(&[
            (-1.0, &self.jac_work),
            (-alpha, &self.ops.mass),
            (-beta, &self.ops.bilaplacian),
        ]);
        Ok(BlockJacobian {
            ops: &self.ops,
            inv_dt: 1.0 / dt,
            lower,
            model: LowerBlockModel {
                mean_coupling,
                alpha,
                beta,
            },
        })
    }

    /// Newton iteration on `(φ⁺, μ)`, stopping when the stacked residual
    /// norm is at most `tol (1 + ‖R₀‖)`.
    fn newton(&mut self, scheme: &Scheme, phi: &mut [f64], mu: &mut [f64], dt: f64) -> Result<NewtonReport> {
        let n = phi.len();
        let tol = self.params.newton_tol;
        let max_iter = self.params.newton_max_iter;
        let phi_n: Vec<f64> = match scheme {
            Scheme::First { phi_n } | Scheme::Second { phi_n, .. } => phi_n.to_vec(),
        };
        let target_mass = self.mass(&phi_n);

        let stacked_norm =
            |r: &(Vec<f64>, Vec<f64>)| r.0.iter().chain(&r.1).map(|v| v * v).sum::<f64>().sqrt();
        let mut res = self.residual(scheme, phi, mu, dt);
        let r0 = stacked_norm(&res);
        let target = tol * (1.0 + r0);
        let mut report = NewtonReport {
            iterations: 0,
            residuals: vec![r0],
            linear_iterations: 0,
        };
        if r0 <= target {
            return Ok(report);
        }
        let mut rhs = vec![0.0; 2 * n];
        let mut delta = vec![0.0; 2 * n];
        for it in 1..=max_iter {
            for (dst, src) in rhs.iter_mut().zip(res.0.iter().chain(&res.1)) {
                *dst = -src;
            }
            delta.iter_mut().for_each(|v| *v = 0.0);
            let jac_scheme = match scheme {
                Scheme::First { .. } => Scheme::First { phi_n: &[] },
                Scheme::Second { .. } => Scheme::Second {
                    phi_n: &phi_n,
                    psi: Vec::new(),
                },
            };
            {
                let jac = self.build_jacobian(&jac_scheme, phi, dt)?;
                // the solver borrows self mutably; move the matrix out of the borrow
                let BlockJacobian {
                    inv_dt, lower, model, ..
                } = jac;
                let jac = BlockJacobian {
                    ops: &self.ops,
                    inv_dt,
                    lower,
                    model,
                };
                self.solver.solve(&jac, &rhs, &mut delta)?;
            }
            report.linear_iterations += self.solver.last.iterations;
            for i in 0..n {
                phi[i] += delta[i];
                mu[i] += delta[n + i];
            }
            // The φ-row summed over all test functions reads
            // 𝟙ᵀM(φ⁺ − φⁿ)/Δt = 0 exactly; restore it against solver round-off.
            let shift = (target_mass - self.mass(phi)) / self.space.volume();
            phi.iter_mut().for_each(|v| *v += shift);

            res = self.residual(scheme, phi, mu, dt);
            let rn = stacked_norm(&res);
            report.residuals.push(rn);
            report.iterations = it;
            if !rn.is_finite() {
                break;
            }
            if rn <= target {
                return Ok(report);
            }
        }
        Err(Error::NewtonDivergence {
            iterations: report.iterations,
            residual: *report.residuals.last().expect("non-empty"),
            target,
        })
    }

    /// Advances `history` by one step of size `dt`. Returns the new state,
    /// its chemical potential and the step diagnostics.
    pub fn step_with_dt(
        &mut self,
        history: &History,
        order: SchemeOrder,
        dt: f64,
    ) -> Result<(FieldState, Vec<f64>, StepDiagnostics, NewtonReport)> {
        history.current.check(&self.space)?;
        let phi_n = &history.current.coefficients;
        let (scheme, mut phi) = match order {
            SchemeOrder::FirstOrder => (Scheme::First { phi_n }, phi_n.clone()),
            SchemeOrder::SecondOrder => {
                let prev = history.previous.as_ref().ok_or(Error::MissingHistory)?;
                let psi = self.extrapolated_concave(history, dt)?;
                let r = dt / history.previous_dt().filter(|d| *d > 0.0).unwrap_or(dt);
                let predictor = phi_n
                    .iter()
                    .zip(&prev.coefficients)
                    .map(|(a, b)| a + r * (a - b))
                    .collect();
                (Scheme::Second { phi_n, psi }, predictor)
            }
        };
        let mut mu = history.mu.clone();
        let report = self.newton(&scheme, &mut phi, &mut mu, dt)?;

        let energy = self.energy(&phi)?;
        let new_mass = self.mass(&phi);
        let old_energy = self.energy(phi_n)?;
        let old_mass = self.mass(phi_n);
        let step = history.current.step + 1;
        let time = history.current.time + dt;

        let increase = energy.total - old_energy.total;
        if increase > ENERGY_SLACK {
            match self.policy {
                ViolationPolicy::Abort => return Err(Error::EnergyIncrease { step, time, increase }),
                ViolationPolicy::Warn => {
                    warn!("energy increased by {increase:.3e} at step {step} (t = {time})")
                }
            }
        }
        let drift = (new_mass - old_mass).abs() / (1.0 + old_mass.abs());
        if drift > MASS_TOLERANCE {
            match self.policy {
                ViolationPolicy::Abort => return Err(Error::MassDrift { step, drift }),
                ViolationPolicy::Warn => warn!("mass drift {drift:.3e} at step {step}"),
            }
        }

        let diag = StepDiagnostics {
            step,
            time,
            dt,
            energy,
            mass: new_mass,
            newton_iterations: report.iterations,
            residual_norm: *report.residuals.last().expect("non-empty"),
            linear_iterations: report.linear_iterations,
        };
        let state = FieldState {
            coefficients: phi,
            time,
            step,
        };
        Ok((state, mu, diag, report))
    }

    /// One step at the nominal `dt`.
    pub fn step(
        &mut self,
        history: &History,
        order: SchemeOrder,
    ) -> Result<(FieldState, Vec<f64>, StepDiagnostics)> {
        let dt = self.params.dt;
        let (s, mu, d, _) = self.step_with_dt(history, order, dt)?;
        Ok((s, mu, d))
    }

    /// Diagnostics record for a state that was not produced by a step.
    pub fn initial_diagnostics(&self, state: &FieldState) -> Result<StepDiagnostics> {
        Ok(StepDiagnostics {
            step: state.step,
            time: state.time,
            dt: 0.0,
            energy: self.energy(&state.coefficients)?,
            mass: self.mass(&state.coefficients),
            newton_iterations: 0,
            residual_norm: 0.0,
            linear_iterations: 0,
        })
    }

    /// Integrates from `initial` to the configured final time. With the
    /// second-order scheme the first step is a first-order bootstrap.
    pub fn run(
        &mut self,
        initial: FieldState,
        schedule: Schedule,
    ) -> std::result::Result<RunOutput, RunFailure> {
        self.run_with(initial, schedule, |_, _| {})
    }

    /// Like [`run`](Self::run), calling `observe` after each accepted step.
    pub fn run_with<F>(
        &mut self,
        initial: FieldState,
        schedule: Schedule,
        mut observe: F,
    ) -> std::result::Result<RunOutput, RunFailure>
    where
        F: FnMut(&FieldState, &StepDiagnostics),
    {
        let mut out = RunOutput {
            max_energy_increase: f64::NEG_INFINITY,
            ..RunOutput::default()
        };
        let fail = |error: Error, out: RunOutput| RunFailure { error, partial: out };
        if let Err(e) = initial.check(&self.space) {
            return Err(fail(e, out));
        }
        match self.initial_diagnostics(&initial) {
            Ok(d) => out.diagnostics.push(d),
            Err(e) => return Err(fail(e, out)),
        }
        out.snapshots.push(initial.clone());

        let final_time = self.params.final_time;
        let nominal = self.params.dt;
        let end_tol = 1e-10 * nominal.min(1.0);
        let mut history = History::new(initial);
        while final_time - history.current.time > end_tol {
            let remaining = final_time - history.current.time;
            let mut dt = if remaining < nominal * (1.0 + 1e-9) {
                remaining
            } else {
                nominal
            };
            let order = match (self.params.scheme, &history.previous) {
                (SchemeOrder::SecondOrder, Some(_)) => SchemeOrder::SecondOrder,
                _ => SchemeOrder::FirstOrder,
            };
            let mut retries = 0;
            let (state, mu, diag) = loop {
                match self.step_with_dt(&history, order, dt) {
                    Ok((s, mu, d, _)) => break (s, mu, d),
                    Err(e @ (Error::NewtonDivergence { .. } | Error::LinearSolve(_)))
                        if retries < MAX_RETRIES =>
                    {
                        warn!(
                            "step at t = {} failed ({e}); halving dt to {}",
                            history.current.time,
                            dt / 2.0
                        );
                        dt *= 0.5;
                        retries += 1;
                        out.step_halvings += 1;
                    }
                    Err(e) => {
                        let error = match e {
                            e @ (Error::NewtonDivergence { .. } | Error::LinearSolve(_)) => {
                                Error::StepFailure {
                                    time: history.current.time,
                                    retries,
                                    source: Box::new(e),
                                }
                            }
                            other => other,
                        };
                        out.final_state = Some(history.current.clone());
                        return Err(fail(error, out));
                    }
                }
            };
            let prev_energy = out.diagnostics.last().expect("initial record").energy.total;
            let increase = diag.energy.total - prev_energy;
            out.max_energy_increase = out.max_energy_increase.max(increase);
            if increase > ENERGY_SLACK {
                out.energy_violations += 1;
            }
            observe(&state, &diag);
            out.diagnostics.push(diag);
            if schedule.snapshot_stride > 0 && state.step % schedule.snapshot_stride == 0 {
                out.snapshots.push(state.clone());
            }
            history.previous = Some(std::mem::replace(&mut history.current, state));
            history.mu = mu;
        }
        let last = history.current;
        if out.snapshots.last().map(|s| s.step) != Some(last.step) {
            out.snapshots.push(last.clone());
        }
        out.final_state = Some(last);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::LinearSolverKind;

    fn params(dim: usize, m: usize, l: f64) -> ModelParams {
        let mut p = ModelParams::new(0.25, 0.0, vec![l; dim], vec![m; dim]);
        p.dt = 0.5;
        p
    }

    fn smooth_state(space: &TensorSpace, amp: f64, mean: f64) -> Vec<f64> {
        (0..space.n_dof())
            .map(|i| {
                let m = space.unflatten(i);
                mean + amp * ((0.9 * m[0] as f64).sin() + (0.4 * m[1] as f64 + 0.3).cos())
            })
            .collect()
    }

    #[test]
    fn constant_states_are_fixed_points() {
        let mut integ = Integrator::new(params(2, 8, 6.0), ViolationPolicy::Abort).unwrap();
        let c = 0.3;
        let eps = 0.25;
        let n = integ.space().n_dof();
        let phi = vec![c; n];
        let mu = vec![c * c * c + (1.0 - eps) * c; n];
        let hist = History {
            current: FieldState::new(phi.clone()),
            previous: Some(FieldState {
                time: -0.5,
                ..FieldState::new(phi.clone())
            }),
            mu: mu.clone(),
        };
        let (rp, rm) = integ.residual_second_order(&hist, &phi, &mu, 0.5).unwrap();
        assert!(rp.iter().chain(&rm).all(|v| v.abs() < 1e-14));
        let (rp, rm) = integ.residual_first_order(&phi, &phi, &mu, 0.5).unwrap();
        assert!(rp.iter().chain(&rm).all(|v| v.abs() < 1e-14));

        let (next, _, diag) = integ
            .step(
                &History::new(FieldState::new(phi.clone())),
                SchemeOrder::FirstOrder,
            )
            .unwrap();
        assert!(diag.newton_iterations <= 1);
        for v in &next.coefficients {
            assert!((v - c).abs() < 1e-13);
        }
    }

    #[test]
    fn second_order_without_history_is_rejected() {
        let integ = Integrator::new(params(2, 6, 6.0), ViolationPolicy::Abort).unwrap();
        let n = integ.space().n_dof();
        let hist = History::new(FieldState::new(vec![0.0; n]));
        assert!(matches!(
            integ.residual_second_order(&hist, &vec![0.0; n], &vec![0.0; n], 0.1),
            Err(Error::MissingHistory)
        ));
    }

    #[test]
    fn phi_residual_sums_to_mass_change() {
        let integ = Integrator::new(params(2, 8, 7.0), ViolationPolicy::Abort).unwrap();
        let s = integ.space().clone();
        let phi_n = smooth_state(&s, 0.2, 0.1);
        let phi_p = smooth_state(&s, 0.3, 0.15);
        let mu = smooth_state(&s, 1.0, -0.2);
        let dt = 0.3;
        let (rp, _) = integ.residual_first_order(&phi_n, &phi_p, &mu, dt).unwrap();
        let lhs: f64 = rp.iter().sum();
        let rhs = (integ.mass(&phi_p) - integ.mass(&phi_n)) / dt;
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn zero_residual_returns_immediately() {
        let mut integ = Integrator::new(params(2, 6, 6.0), ViolationPolicy::Abort).unwrap();
        let n = integ.space().n_dof();
        let c = 0.2;
        let mut hist = History::new(FieldState::new(vec![c; n]));
        hist.mu = vec![c * c * c + 0.75 * c; n];
        let (_, _, _, report) = integ.step_with_dt(&hist, SchemeOrder::FirstOrder, 0.1).unwrap();
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn jacobian_at_zero_is_linear() {
        let mut integ = Integrator::new(params(2, 6, 6.0), ViolationPolicy::Abort).unwrap();
        let n = integ.space().n_dof();
        let hist = History {
            current: FieldState::new(vec![0.0; n]),
            previous: Some(FieldState::new(vec![0.0; n])),
            mu: vec![0.0; n],
        };
        let jac = integ.jacobian_second_order(&hist, &vec![0.0; n], 0.1).unwrap();
        assert_eq!(jac.model.mean_coupling, 0.0);
        let expected = SparseMatrix::combination(&[(-0.375, &jac.ops.mass), (-0.5, &jac.ops.bilaplacian)]);
        for (a, b) in jac.lower.values().iter().zip(expected.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn direct_and_krylov_steps_agree() {
        let mut p = params(2, 8, 8.0);
        p.dt = 2.0;
        let mut a = Integrator::new(p.clone(), ViolationPolicy::Abort).unwrap();
        p.linear_solver = LinearSolverKind::Direct;
        let mut b = Integrator::new(p, ViolationPolicy::Abort).unwrap();
        let s = a.space().clone();
        let hist = History::new(FieldState::new(smooth_state(&s, 0.2, 0.1)));
        let (sa, _, _) = a.step(&hist, SchemeOrder::FirstOrder).unwrap();
        let (sb, _, _) = b.step(&hist, SchemeOrder::FirstOrder).unwrap();
        for (x, y) in sa.coefficients.iter().zip(&sb.coefficients) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn run_of_zero_length_returns_initial_state() {
        let mut p = params(2, 6, 6.0);
        p.final_time = 0.0;
        let mut integ = Integrator::new(p, ViolationPolicy::Abort).unwrap();
        let n = integ.space().n_dof();
        let out = integ
            .run(FieldState::new(vec![0.1; n]), Schedule { snapshot_stride: 1 })
            .unwrap();
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.final_state.unwrap().step, 0);
    }

    #[test]
    fn run_hits_final_time_exactly() {
        let mut p = params(2, 6, 6.0);
        p.dt = 0.3;
        p.final_time = 1.0;
        let mut integ = Integrator::new(p, ViolationPolicy::Abort).unwrap();
        let s = integ.space().clone();
        let out = integ
            .run(
                FieldState::new(smooth_state(&s, 0.1, 0.0)),
                Schedule { snapshot_stride: 2 },
            )
            .unwrap();
        let last = out.diagnostics.last().unwrap();
        assert!((last.time - 1.0).abs() < 1e-14);
        assert_eq!(last.step, 4);
        assert!((last.dt - 0.1).abs() < 1e-12);
        // initial, step 2, step 4
        assert_eq!(
            out.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(),
            vec![0, 2, 4]
        );
    }
}
