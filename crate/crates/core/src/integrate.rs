//! Fixed-step Dormand–Prince RK5(4) integration.
//!
//! The tableau is applied to plain states and to the state + tangent-bundle
//! system `(s' = f(s), M' = J(s) M)`. The augmented vector is laid out as
//! `[s, m_0, m_1, ..]` where `m_k` is the k-th tangent column. The embedded
//! fourth-order solution is evaluated on every step but only reported; step
//! sizes never adapt.

use nalgebra::DMatrix;

use crate::dynsys::{with_field, StateVector, SystemKind, SystemSpec, VectorField};
use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// fifth-order weights (b2 = b7 = 0)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Tangent columns above this norm mean the basis was not renormalized in time.
pub const TANGENT_NORM_LIMIT: f64 = 1e150;

/// Result of one Dormand–Prince step.
#[derive(Debug, Clone, Copy)]
pub struct Dp5Step<const M: usize> {
    /// Fifth-order solution.
    pub y: [f64; M],
    /// `f(y)`, which is the first stage of the following step.
    pub f_next: [f64; M],
    /// Difference between the fifth- and embedded fourth-order solutions.
    pub error: [f64; M],
}

/// One step from `y` with `k1 = f(y)` already evaluated.
#[inline(always)]
pub fn dp5_step_with_k1<const M: usize, F>(f: &F, y: &[f64; M], k1: &[f64; M], h: f64) -> Dp5Step<M>
where
    F: Fn(&[f64; M]) -> [f64; M],
{
    let mut t = [0.0; M];
    for i in 0..M {
        t[i] = y[i] + h * (A21 * k1[i]);
    }
    let k2 = f(&t);
    for i in 0..M {
        t[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = f(&t);
    for i in 0..M {
        t[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(&t);
    for i in 0..M {
        t[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(&t);
    for i in 0..M {
        t[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(&t);
    let mut y5 = [0.0; M];
    for i in 0..M {
        y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    let k7 = f(&y5);
    let mut error = [0.0; M];
    for i in 0..M {
        error[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Dp5Step {
        y: y5,
        f_next: k7,
        error,
    }
}

/// One step of a vector field, evaluating the first stage itself.
pub fn dp5_step_field<const N: usize, F: VectorField<N>>(field: &F, y: &[f64; N], h: f64) -> Dp5Step<N> {
    let f = |s: &[f64; N]| field.rhs(s);
    dp5_step_with_k1(&f, y, &f(y), h)
}

/// Integrates `n_steps` fixed steps, calling `observe(i, state)` for `i = 0..=n_steps`.
///
/// Returns the final state. The check for non-finite values runs on every step.
pub fn integrate_field_observed<const N: usize, F, O>(
    field: &F,
    s0: [f64; N],
    h: f64,
    n_steps: usize,
    mut observe: O,
) -> Result<[f64; N]>
where
    F: VectorField<N>,
    O: FnMut(usize, &[f64; N]),
{
    let f = |s: &[f64; N]| field.rhs(s);
    let mut y = s0;
    let mut k1 = f(&y);
    observe(0, &y);
    for step in 1..=n_steps {
        let out = dp5_step_with_k1(&f, &y, &k1, h);
        if out.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                t: step as f64 * h,
                step,
                state: y.to_vec(),
            });
        }
        y = out.y;
        k1 = out.f_next;
        observe(step, &y);
    }
    Ok(y)
}

#[inline(always)]
fn augmented_rhs<const N: usize, const M: usize, F: VectorField<N>>(field: &F, y: &[f64; M]) -> [f64; M] {
    let s: &[f64; N] = y[..N].try_into().unwrap();
    let jac = field.jacobian(s);
    let mut out = [0.0; M];
    out[..N].copy_from_slice(&field.rhs(s));
    for k in 0..N {
        let col = &y[N + k * N..N + (k + 1) * N];
        for i in 0..N {
            let mut acc = 0.0;
            for j in 0..N {
                acc += jac[i][j] * col[j];
            }
            out[N + k * N + i] = acc;
        }
    }
    out
}

/// Packs a state and its tangent columns (`cols[k]` = k-th tangent vector).
pub(crate) fn pack<const N: usize, const M: usize>(s: &[f64; N], cols: &[[f64; N]; N]) -> [f64; M] {
    debug_assert_eq!(M, N + N * N);
    let mut y = [0.0; M];
    y[..N].copy_from_slice(s);
    for (k, col) in cols.iter().enumerate() {
        y[N + k * N..N + (k + 1) * N].copy_from_slice(col);
    }
    y
}

pub(crate) fn unpack<const N: usize, const M: usize>(y: &[f64; M]) -> ([f64; N], [[f64; N]; N]) {
    let s: [f64; N] = y[..N].try_into().unwrap();
    let mut cols = [[0.0; N]; N];
    for (k, col) in cols.iter_mut().enumerate() {
        col.copy_from_slice(&y[N + k * N..N + (k + 1) * N]);
    }
    (s, cols)
}

/// Advances the augmented state + tangent system `n_steps` steps.
///
/// `observe(i, state)` sees the state part after every step `i = 1..=n_steps`.
/// `M` must equal `N + N * N`.
pub fn integrate_tangents_field<const N: usize, const M: usize, F, O>(
    field: &F,
    y0: [f64; M],
    h: f64,
    n_steps: usize,
    mut observe: O,
) -> Result<[f64; M]>
where
    F: VectorField<N>,
    O: FnMut(usize, &[f64; N]),
{
    assert_eq!(M, N + N * N, "augmented length must be N + N^2");
    let f = |y: &[f64; M]| augmented_rhs::<N, M, F>(field, y);
    let mut y = y0;
    let mut k1 = f(&y);
    for step in 1..=n_steps {
        let out = dp5_step_with_k1(&f, &y, &k1, h);
        if out.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                t: step as f64 * h,
                step,
                state: y[..N].to_vec(),
            });
        }
        y = out.y;
        k1 = out.f_next;
        observe(step, y[..N].try_into().unwrap());
    }
    for k in 0..N {
        let norm = y[N + k * N..N + (k + 1) * N].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > TANGENT_NORM_LIMIT {
            return Err(Error::TangentOverflow {
                t: n_steps as f64 * h,
                norm,
            });
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub step: f64,
    pub t0: f64,
    pub t1: f64,
    /// Keep one of every `record_every` steps; 0 keeps only the final state.
    pub record_every: usize,
}

impl IntegrationConfig {
    pub fn new(step: f64, t0: f64, t1: f64, record_every: usize) -> Self {
        IntegrationConfig {
            step,
            t0,
            t1,
            record_every,
        }
    }

    /// `round((t1 - t0) / step)`, after checking the span is a whole number of steps.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::contract(format!("step must be positive, got {}", self.step)));
        }
        if !(self.t1 >= self.t0) {
            return Err(Error::contract(format!(
                "t_span must be ordered, got ({}, {})",
                self.t0, self.t1
            )));
        }
        let ratio = (self.t1 - self.t0) / self.step;
        let n = ratio.round();
        if (ratio - n).abs() >= 0.5 || !n.is_finite() {
            return Err(Error::contract("span is not a whole number of steps"));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub final_time: f64,
    pub final_state: StateVector,
}

/// One Dormand–Prince step of a system.
pub fn dopri5_step(spec: &SystemSpec, s: &StateVector, h: f64) -> Result<StateVector> {
    if !(h > 0.0) {
        return Err(Error::contract(format!("step must be positive, got {h}")));
    }
    if s.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("initial state is not finite"));
    }
    let next = with_field!(spec, field => {
        let y = dp5_step_field(&field, &s.to_array()?, h).y;
        y.to_vec()
    });
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            t: h,
            step: 1,
            state: s.0.clone(),
        });
    }
    Ok(StateVector(next))
}

pub fn integrate(spec: &SystemSpec, s0: &StateVector, cfg: &IntegrationConfig) -> Result<Trajectory> {
    let n_steps = cfg.n_steps()?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let every = cfg.record_every;
    let (h, t0) = (cfg.step, cfg.t0);
    let final_state = with_field!(spec, field => {
        let y = integrate_field_observed(&field, s0.to_array()?, h, n_steps, |i, s| {
            if (every == 0 && n_steps == 0) || (every > 0 && i % every == 0) {
                times.push(t0 + i as f64 * h);
                states.push(StateVector(s.to_vec()));
            }
        })
        .map_err(|e| e.shifted(t0))?;
        StateVector(y.to_vec())
    });
    let final_time = t0 + n_steps as f64 * h;
    if every == 0 && n_steps > 0 {
        times.push(final_time);
        states.push(final_state.clone());
    }
    Ok(Trajectory {
        times,
        states,
        final_time,
        final_state,
    })
}

fn columns_of<const N: usize>(m: &DMatrix<f64>) -> Result<[[f64; N]; N]> {
    if m.nrows() != N || m.ncols() != N {
        return Err(Error::contract(format!(
            "tangent basis must be {N}x{N}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("tangent basis is not finite"));
    }
    let mut cols = [[0.0; N]; N];
    for (k, col) in cols.iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = m[(i, k)];
        }
    }
    Ok(cols)
}

fn matrix_of<const N: usize>(cols: &[[f64; N]; N]) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |i, k| cols[k][i])
}

fn tangents_dispatch<const N: usize, const M: usize, F: VectorField<N>>(
    field: &F,
    s0: &StateVector,
    basis: &DMatrix<f64>,
    n_steps: usize,
    h: f64,
) -> Result<(StateVector, DMatrix<f64>)> {
    let y0 = pack::<N, M>(&s0.to_array()?, &columns_of::<N>(basis)?);
    let y = integrate_tangents_field::<N, M, F, _>(field, y0, h, n_steps, |_, _| {})?;
    let (s, cols) = unpack::<N, M>(&y);
    Ok((StateVector(s.to_vec()), matrix_of(&cols)))
}

/// Integrates the state together with the columns of `basis` under the variational flow.
pub fn integrate_with_tangents(
    spec: &SystemSpec,
    s0: &StateVector,
    basis: &DMatrix<f64>,
    n_steps: usize,
    h: f64,
) -> Result<(StateVector, DMatrix<f64>)> {
    if !(h > 0.0) {
        return Err(Error::contract(format!("step must be positive, got {h}")));
    }
    match spec.kind {
        SystemKind::Lorenz => tangents_dispatch::<3, 12, _>(&spec.lorenz_field(), s0, basis, n_steps, h),
        SystemKind::CoupledLorenz => tangents_dispatch::<6, 42, _>(&spec.coupled_field(), s0, basis, n_steps, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::SystemParams;

    struct Zero;
    impl VectorField<3> for Zero {
        fn rhs(&self, _: &[f64; 3]) -> [f64; 3] {
            [0.0; 3]
        }
        fn jacobian(&self, _: &[f64; 3]) -> [[f64; 3]; 3] {
            [[0.0; 3]; 3]
        }
    }

    struct Linear1(f64);
    impl VectorField<1> for Linear1 {
        fn rhs(&self, s: &[f64; 1]) -> [f64; 1] {
            [self.0 * s[0]]
        }
        fn jacobian(&self, _: &[f64; 1]) -> [[f64; 1]; 1] {
            [[self.0]]
        }
    }

    /// x' = -w y, y' = w x
    struct Rotation(f64);
    impl VectorField<2> for Rotation {
        fn rhs(&self, s: &[f64; 2]) -> [f64; 2] {
            [-self.0 * s[1], self.0 * s[0]]
        }
        fn jacobian(&self, _: &[f64; 2]) -> [[f64; 2]; 2] {
            [[0.0, -self.0], [self.0, 0.0]]
        }
    }

    fn lorenz() -> SystemSpec {
        SystemSpec::lorenz(SystemParams::default()).unwrap()
    }

    #[test]
    fn zero_field_leaves_state() {
        let s = [1.5, -2.0, 3.25];
        assert_eq!(dp5_step_field(&Zero, &s, 0.3).y, s);
    }

    #[test]
    fn exponential_decay_one_step() {
        let y = dp5_step_field(&Linear1(-1.0), &[1.0], 0.1).y[0];
        assert!((y - (-0.1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn fifth_order_convergence() {
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| (dp5_step_field(&Linear1(-1.0), &[1.0], h).y[0] - (-h).exp()).abs())
            .collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 2f64.powf(4.5), "ratio {}", w[0] / w[1]);
        }
    }

    #[test]
    fn embedded_estimate_is_small_and_shrinks() {
        let e1 = dp5_step_field(&Linear1(-1.0), &[1.0], 0.1).error[0].abs();
        let e2 = dp5_step_field(&Linear1(-1.0), &[1.0], 0.05).error[0].abs();
        assert!(e1 > 0.0 && e1 < 1e-6);
        assert!(e1 / e2 > 16.0);
    }

    #[test]
    fn lorenz_orbit_stays_bounded() {
        let cfg = IntegrationConfig::new(0.01, 0.0, 100.0, 1);
        let traj = integrate(&lorenz(), &StateVector(vec![1.0, 1.0, 1.0]), &cfg).unwrap();
        let max = traj
            .states
            .iter()
            .flat_map(|s| s.0.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 100.0 && max > 1.0, "max {max}");
    }

    #[test]
    fn empty_span_returns_initial_state() {
        let s0 = StateVector(vec![1.0, 2.0, 3.0]);
        let traj = integrate(&lorenz(), &s0, &IntegrationConfig::new(0.01, 5.0, 5.0, 1)).unwrap();
        assert_eq!(traj.states, vec![s0.clone()]);
        assert_eq!(traj.final_state, s0);
        let traj = integrate(&lorenz(), &s0, &IntegrationConfig::new(0.01, 5.0, 5.0, 0)).unwrap();
        assert_eq!(traj.states, vec![s0]);
    }

    #[test]
    fn record_every_counts_points() {
        let cfg = IntegrationConfig::new(0.001, 0.0, 10.0, 100);
        let traj = integrate(&lorenz(), &StateVector(vec![1.0, 1.0, 1.0]), &cfg).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert_eq!(traj.times.len(), 101);
        for w in traj.times.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
        assert_eq!(traj.states.last(), Some(&traj.final_state));

        let only_final = IntegrationConfig::new(0.001, 0.0, 10.0, 0);
        let t2 = integrate(&lorenz(), &StateVector(vec![1.0, 1.0, 1.0]), &only_final).unwrap();
        assert_eq!(t2.states.len(), 1);
        assert_eq!(t2.final_state, traj.final_state);
    }

    #[test]
    fn rotation_returns_after_one_period() {
        let w = 1.0;
        let n = 2000;
        let h = 2.0 * std::f64::consts::PI / (w * n as f64);
        let end = integrate_field_observed(&Rotation(w), [1.0, 0.0], h, n, |_, _| {}).unwrap();
        assert!((end[0] - 1.0).abs() < 1e-8 && end[1].abs() < 1e-8, "{end:?}");
    }

    #[test]
    fn bad_config_rejected() {
        assert!(IntegrationConfig::new(0.0, 0.0, 1.0, 1).n_steps().is_err());
        assert!(IntegrationConfig::new(0.1, 1.0, 0.0, 1).n_steps().is_err());
        assert_eq!(IntegrationConfig::new(0.01, 0.0, 100.0, 1).n_steps().unwrap(), 10_000);
    }

    #[test]
    fn overflow_reports_step() {
        // y' = y^2 blows up at t = 1 from y0 = 1
        struct Blowup;
        impl VectorField<1> for Blowup {
            fn rhs(&self, s: &[f64; 1]) -> [f64; 1] {
                [s[0] * s[0]]
            }
            fn jacobian(&self, s: &[f64; 1]) -> [[f64; 1]; 1] {
                [[2.0 * s[0]]]
            }
        }
        let err = integrate_field_observed(&Blowup, [1.0], 0.01, 1000, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::Overflow { step, .. } if step > 90 && step < 120));
    }

    #[test]
    fn tangents_zero_steps_and_zero_flow() {
        let s0 = StateVector(vec![1.0, 2.0, 3.0]);
        let basis = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 0.5);
        let (s, m) = integrate_with_tangents(&lorenz(), &s0, &basis, 0, 0.01).unwrap();
        assert_eq!(s, s0);
        assert_eq!(m, basis);

        let y0 = pack::<3, 12>(&[1.0, 2.0, 3.0], &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.5]]);
        let y = integrate_tangents_field::<3, 12, _, _>(&Zero, y0, 0.1, 50, |_, _| {}).unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn scalar_tangent_grows_exponentially() {
        let a = 0.7;
        let (n, h) = (500, 0.002);
        let y = integrate_tangents_field::<1, 2, _, _>(&Linear1(a), [1.0, 1.0], h, n, |_, _| {}).unwrap();
        let exact = (a * n as f64 * h).exp();
        assert!(((y[1] - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn tangent_overflow_detected() {
        let y = integrate_tangents_field::<1, 2, _, _>(&Linear1(40.0), [0.0, 1.0], 0.01, 1000, |_, _| {});
        assert!(matches!(y, Err(Error::TangentOverflow { .. })));
    }

    #[test]
    fn tangents_match_finite_difference_flow() {
        let spec = lorenz();
        let s0 = StateVector(vec![1.0, 1.0, 1.0]);
        let (n, h, eps) = (50, 0.001, 1e-7);
        let (_, m) = integrate_with_tangents(&spec, &s0, &DMatrix::identity(3, 3), n, h).unwrap();
        let flow = |s: &StateVector| {
            integrate(&spec, s, &IntegrationConfig::new(h, 0.0, n as f64 * h, 0))
                .unwrap()
                .final_state
        };
        for col in 0..3 {
            let mut plus = s0.clone();
            let mut minus = s0.clone();
            plus.0[col] += eps;
            minus.0[col] -= eps;
            let (fp, fm) = (flow(&plus), flow(&minus));
            for row in 0..3 {
                let fd = (fp.0[row] - fm.0[row]) / (2.0 * eps);
                let rel = (fd - m[(row, col)]).abs() / m[(row, col)].abs().max(1e-3);
                assert!(rel < 1e-4, "({row},{col}): fd {fd} vs {}", m[(row, col)]);
            }
        }
    }

    #[test]
    fn state_part_matches_plain_integration() {
        let spec = SystemSpec::coupled(SystemParams::default()).unwrap();
        let s0 = spec.kind.default_initial_state();
        let (s, _) = integrate_with_tangents(&spec, &s0, &DMatrix::identity(6, 6), 300, 0.01).unwrap();
        let plain = integrate(&spec, &s0, &IntegrationConfig::new(0.01, 0.0, 3.0, 0)).unwrap();
        for (a, b) in s.0.iter().zip(&plain.final_state.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = IntegrationConfig::new(0.01, 0.0, 20.0, 7);
        let s0 = StateVector(vec![1.0, 1.0, 1.0]);
        let a = integrate(&lorenz(), &s0, &cfg).unwrap();
        let b = integrate(&lorenz(), &s0, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
