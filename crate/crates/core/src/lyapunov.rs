//! Full Lyapunov spectra by tangent-bundle integration with periodic
//! modified Gram–Schmidt reorthonormalization.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dynsys::{StateVector, SystemKind, SystemSpec, VectorField};
use crate::error::{Error, Result};
use crate::integrate::{integrate_field_observed, integrate_tangents_field, pack, unpack, IntegrationConfig};

/// Lyapunov exponents sorted in descending order (units 1/time).
#[derive(Debug, Clone, PartialEq)]
pub struct LeVector(Vec<f64>);

impl LeVector {
    /// Sorts `values` descending; rejects non-finite entries.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite Lyapunov exponents {values:?}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(LeVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest exponent.
    pub fn mle(&self) -> f64 {
        self.0[0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for LeVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeConfig {
    pub transient_time: f64,
    pub transient_step: f64,
    pub measure_time: f64,
    pub measure_step: f64,
    pub renorm_interval_steps: usize,
}

impl LeConfig {
    /// Transient 100,000 at 0.01, then 10,001 time units at 0.001.
    pub fn paper() -> Self {
        LeConfig {
            transient_time: 100_000.0,
            transient_step: 0.01,
            measure_time: 10_001.0,
            measure_step: 0.001,
            renorm_interval_steps: 1000,
        }
    }

    /// Transient 500 and measure 1000 time units, both at step 0.01.
    pub fn desk() -> Self {
        LeConfig {
            transient_time: 500.0,
            transient_step: 0.01,
            measure_time: 1000.0,
            measure_step: 0.01,
            renorm_interval_steps: 100,
        }
    }

    pub fn with_measure_time(mut self, t: f64) -> Self {
        self.measure_time = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.transient_time,
            self.transient_step,
            self.measure_time,
            self.measure_step,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::contract(format!("LE config times must be positive: {self:?}")));
        }
        if self.renorm_interval_steps == 0 {
            return Err(Error::contract("renorm_interval_steps must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn transient_steps(&self) -> Result<usize> {
        IntegrationConfig::new(self.transient_step, 0.0, self.transient_time, 0).n_steps()
    }

    pub(crate) fn measure_steps(&self) -> Result<usize> {
        IntegrationConfig::new(self.measure_step, 0.0, self.measure_time, 0).n_steps()
    }
}

impl Default for LeConfig {
    fn default() -> Self {
        LeConfig::paper()
    }
}

/// Named generation profiles recorded in dataset files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    pub fn le_config(self) -> LeConfig {
        match self {
            Profile::Paper => LeConfig::paper(),
            Profile::Desk => LeConfig::desk(),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Profile::Paper => 0,
            Profile::Desk => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Profile::Paper),
            1 => Some(Profile::Desk),
            _ => None,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }
}

pub const MIN_COLUMN_NORM: f64 = 1e-300;

/// Modified Gram–Schmidt on the columns of a column-major `n x n` block.
///
/// On return `cols` holds Q. When `r` is given it receives R (column-major,
/// upper triangular). Returns the diagonal of R.
pub(crate) fn mgs_in_place(cols: &mut [f64], n: usize, mut r: Option<&mut [f64]>) -> Result<Vec<f64>> {
    debug_assert_eq!(cols.len(), n * n);
    let mut norms = vec![0.0; n];
    for k in 0..n {
        let (done, rest) = cols.split_at_mut(k * n);
        let v = &mut rest[..n];
        for j in 0..k {
            let q = &done[j * n..(j + 1) * n];
            let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
            if let Some(r) = r.as_deref_mut() {
                r[k * n + j] = proj;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > MIN_COLUMN_NORM) {
            return Err(Error::RankDeficient { column: k, norm });
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        if let Some(r) = r.as_deref_mut() {
            r[k * n + k] = norm;
            for j in k + 1..n {
                r[k * n + j] = 0.0;
            }
        }
        norms[k] = norm;
    }
    Ok(norms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramSchmidtQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl GramSchmidtQr {
    /// Stretch factors: the diagonal of R.
    pub fn norms(&self) -> Vec<f64> {
        self.r.diagonal().iter().copied().collect()
    }
}

pub fn gram_schmidt_qr(m: &DMatrix<f64>) -> Result<GramSchmidtQr> {
    if m.nrows() != m.ncols() {
        return Err(Error::contract(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let mut q = m.clone();
    let mut r = DMatrix::zeros(n, n);
    mgs_in_place(q.as_mut_slice(), n, Some(r.as_mut_slice()))?;
    Ok(GramSchmidtQr { q, r })
}

/// Fixed orthonormal starting basis for the tangent vectors.
///
/// It is the Gram–Schmidt orthonormalization of `I + 0.3 S` with
/// `S[i][k] = sin(1 + i + 2.3 k)`, so no column lies in a coordinate subspace.
/// Starting from the identity instead aligns the first columns with invariant
/// coordinate planes (the `z` axis of the Lorenz origin), which delays the
/// ordering of the exponents by a time that grows with how close the orbit sits
/// to the equilibrium.
pub fn initial_basis<const N: usize>() -> [[f64; N]; N] {
    let mut cols = [[0.0; N]; N];
    for (k, col) in cols.iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = if i == k { 1.0 } else { 0.0 } + 0.3 * (1.0 + i as f64 + 2.3 * k as f64).sin();
        }
    }
    mgs_in_place(cols.as_flattened_mut(), N, None).expect("starting basis is well conditioned");
    cols
}

/// Accumulated log stretch factors (unsorted, Gram–Schmidt order) and the final state.
pub(crate) fn benettin_field<const N: usize, const M: usize, F, O>(
    field: &F,
    s0: [f64; N],
    cfg: &LeConfig,
    mut observe: O,
) -> Result<([f64; N], [f64; N])>
where
    F: VectorField<N>,
    O: FnMut(usize, &[f64; N]),
{
    cfg.validate()?;
    let n_transient = cfg.transient_steps()?;
    let n_measure = cfg.measure_steps()?;
    let s = integrate_field_observed(field, s0, cfg.transient_step, n_transient, |_, _| {})?;

    let mut y: [f64; M] = pack(&s, &initial_basis::<N>());
    let mut log_sums = [0.0; N];
    let mut done = 0;
    while done < n_measure {
        let chunk = cfg.renorm_interval_steps.min(n_measure - done);
        let offset = done;
        let t_offset = cfg.transient_time + done as f64 * cfg.measure_step;
        y = integrate_tangents_field::<N, M, F, _>(field, y, cfg.measure_step, chunk, |i, st| observe(offset + i, st))
            .map_err(|e| e.shifted(t_offset))?;
        done += chunk;
        let (s, mut cols) = unpack::<N, M>(&y);
        let norms = mgs_in_place(cols.as_flattened_mut(), N, None).map_err(|e| match e {
            Error::RankDeficient { column, norm } => Error::Numeric(format!(
                "rank-deficient tangent basis (column {column}, norm {norm:e}) at t = {}",
                cfg.transient_time + done as f64 * cfg.measure_step
            )),
            other => other,
        })?;
        for (acc, n) in log_sums.iter_mut().zip(&norms) {
            *acc += n.ln();
        }
        y = pack(&s, &cols);
    }
    let elapsed = n_measure as f64 * cfg.measure_step;
    let (s_final, _) = unpack::<N, M>(&y);
    Ok((log_sums.map(|v| v / elapsed), s_final))
}

/// Classical spectrum with an observer on the measure-phase states.
///
/// `observe(i, state)` sees the state after measure step `i` (1-based).
pub fn benettin_observed<O>(
    spec: &SystemSpec,
    s0: &StateVector,
    cfg: &LeConfig,
    mut observe: O,
) -> Result<(LeVector, StateVector)>
where
    O: FnMut(usize, &[f64]),
{
    let (les, s) = match spec.kind {
        SystemKind::Lorenz => {
            let (l, s) =
                benettin_field::<3, 12, _, _>(&spec.lorenz_field(), s0.to_array()?, cfg, |i, st| observe(i, st))?;
            (l.to_vec(), s.to_vec())
        }
        SystemKind::CoupledLorenz => {
            let (l, s) =
                benettin_field::<6, 42, _, _>(&spec.coupled_field(), s0.to_array()?, cfg, |i, st| observe(i, st))?;
            (l.to_vec(), s.to_vec())
        }
    };
    Ok((LeVector::new(les)?, StateVector(s)))
}

/// Full Lyapunov spectrum from `s0`, plus the final state of the measure run.
pub fn benettin_spectrum(spec: &SystemSpec, s0: &StateVector, cfg: &LeConfig) -> Result<(LeVector, StateVector)> {
    benettin_observed(spec, s0, cfg, |_, _| {})
}

/// Real parts of the Jacobian eigenvalues at an equilibrium, descending.
pub fn spectrum_of_equilibrium(spec: &SystemSpec, eq: &StateVector) -> Result<LeVector> {
    let f = spec.rhs(eq)?;
    let residual = f.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual < 1e-8) {
        return Err(Error::contract(format!("not an equilibrium: |rhs|_inf = {residual:e}")));
    }
    let jac = spec.jacobian(eq)?;
    let eig = jac.complex_eigenvalues();
    LeVector::new(eig.iter().map(|c| c.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::SystemParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lorenz(r: f64, b: f64) -> SystemSpec {
        SystemSpec::lorenz(SystemParams::new(10.0, r, b)).unwrap()
    }

    fn short_cfg() -> LeConfig {
        LeConfig {
            transient_time: 100.0,
            transient_step: 0.01,
            measure_time: 300.0,
            measure_step: 0.01,
            renorm_interval_steps: 100,
        }
    }

    #[test]
    fn le_vector_sorts_and_rejects_nan() {
        let v = LeVector::new(vec![-1.0, 0.5, -10.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.5, -1.0, -10.0]);
        assert_eq!(v.mle(), 0.5);
        assert!(LeVector::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn qr_identity_and_diagonal() {
        let qr = gram_schmidt_qr(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(qr.q, DMatrix::identity(3, 3));
        assert_eq!(qr.norms(), vec![1.0, 1.0, 1.0]);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 4.0]));
        let qr = gram_schmidt_qr(&d).unwrap();
        assert_eq!(qr.q, DMatrix::identity(3, 3));
        assert_eq!(qr.norms(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn qr_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tested = 0;
        while tested < 50 {
            let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let sv = m.singular_values();
            if sv.max() / sv.min() >= 1e3 {
                continue;
            }
            tested += 1;
            let qr = gram_schmidt_qr(&m).unwrap();
            let ortho = (qr.q.transpose() * &qr.q - DMatrix::identity(3, 3)).abs().max();
            let recon = (&qr.q * &qr.r - &m).abs().max();
            assert!(ortho < 1e-12 && recon < 1e-12, "{ortho} {recon}");
            for i in 0..3 {
                assert!(qr.r[(i, i)] > 0.0);
                for j in 0..i {
                    assert_eq!(qr.r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_rank_deficiency() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            gram_schmidt_qr(&m),
            Err(Error::RankDeficient { column: 1, .. })
        ));
        assert!(gram_schmidt_qr(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn equilibrium_spectrum_closed_forms() {
        let origin = StateVector(vec![0.0; 3]);
        let le = spectrum_of_equilibrium(&lorenz(0.5, 8.0 / 3.0), &origin).unwrap();
        let disc = 101.0f64.sqrt();
        let expected = [(-11.0 + disc) / 2.0, -8.0 / 3.0, (-11.0 - disc) / 2.0];
        for (a, b) in le.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((expected[0] + 0.4751).abs() < 1e-4 && (expected[2] + 10.5249).abs() < 1e-4);

        let le = spectrum_of_equilibrium(&lorenz(1.0, 8.0 / 3.0), &origin).unwrap();
        assert!(le.mle().abs() < 1e-12);

        let le = spectrum_of_equilibrium(&lorenz(0.0, 2.0), &origin).unwrap();
        for (a, b) in le.as_slice().iter().zip([-1.0, -2.0, -10.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn equilibrium_spectrum_requires_equilibrium() {
        let err = spectrum_of_equilibrium(&lorenz(28.0, 8.0 / 3.0), &StateVector(vec![1.0, 1.0, 1.0]));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn stable_origin_matches_eigenvalues() {
        let spec = lorenz(0.5, 8.0 / 3.0);
        let (le, s) = benettin_spectrum(&spec, &StateVector(vec![1.0, 1.0, 1.0]), &short_cfg()).unwrap();
        let exact = spectrum_of_equilibrium(&spec, &StateVector(vec![0.0; 3])).unwrap();
        for (a, b) in le.as_slice().iter().zip(exact.as_slice()) {
            assert!((a - b).abs() < 0.05, "{le:?} vs {exact:?}");
        }
        assert!(s.0.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn sum_matches_divergence_for_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for i in 0..6 {
            let kind = if i % 2 == 0 {
                SystemKind::Lorenz
            } else {
                SystemKind::CoupledLorenz
            };
            let params = SystemParams::new(10.0, rng.random_range(0.0..300.0), rng.random_range(2.0..3.0));
            let spec = SystemSpec::new(kind, params).unwrap();
            let (le, _) = benettin_spectrum(&spec, &kind.default_initial_state(), &short_cfg()).unwrap();
            assert_eq!(le.len(), kind.dim());
            assert!(le.as_slice().windows(2).all(|w| w[0] >= w[1]));
            let tol = if kind == SystemKind::Lorenz { 0.02 } else { 0.04 };
            assert!((le.sum() - spec.divergence()).abs() < tol, "{params:?}: {le:?}");
        }
    }

    #[test]
    fn chaotic_lorenz_has_positive_and_zero_exponent() {
        let (le, _) = benettin_spectrum(
            &lorenz(28.0, 8.0 / 3.0),
            &StateVector(vec![1.0, 1.0, 1.0]),
            &short_cfg(),
        )
        .unwrap();
        assert!((le[0] - 0.906).abs() < 0.1, "{le:?}");
        assert!(le[1].abs() < 0.05, "{le:?}");
    }

    #[test]
    fn observer_sees_every_measure_step() {
        let cfg = LeConfig {
            transient_time: 1.0,
            transient_step: 0.01,
            measure_time: 2.5,
            measure_step: 0.01,
            renorm_interval_steps: 40,
        };
        let mut seen = Vec::new();
        let (_, last) = benettin_observed(
            &lorenz(28.0, 8.0 / 3.0),
            &StateVector(vec![1.0, 1.0, 1.0]),
            &cfg,
            |i, s| seen.push((i, s.to_vec())),
        )
        .unwrap();
        assert_eq!(seen.len(), 250);
        assert!(seen.iter().enumerate().all(|(k, (i, _))| *i == k + 1));
        assert_eq!(seen.last().unwrap().1, last.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LeConfig::desk();
        cfg.renorm_interval_steps = 0;
        assert!(cfg.validate().is_err());
        cfg = LeConfig::desk();
        cfg.measure_time = -1.0;
        assert!(cfg.validate().is_err());
        assert!(LeConfig::paper().validate().is_ok());
        for p in [Profile::Paper, Profile::Desk] {
            assert_eq!(Profile::from_id(p.id()), Some(p));
            assert_eq!(p.to_string().parse::<Profile>().unwrap(), p);
        }
    }
}
