//! The Lorenz system and two coupled Lorenz oscillators.
//!
//! Every system is exposed twice: as a fixed-size [`VectorField`] used by the
//! integrators' hot loops, and through the runtime-dispatched [`SystemSpec`]
//! that the rest of the crate passes around.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A smooth autonomous vector field on `R^N` with an analytic Jacobian.
pub trait VectorField<const N: usize> {
    fn rhs(&self, s: &[f64; N]) -> [f64; N];

    /// `jac[i][j] = d rhs_i / d s_j`.
    fn jacobian(&self, s: &[f64; N]) -> [[f64; N]; N];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
    /// Coupling of the second oscillator into the first (coupled system only).
    pub lambda1: f64,
    /// Coupling of the first oscillator into the second (coupled system only).
    pub lambda2: f64,
}

pub const DEFAULT_COUPLING: f64 = 0.1;
/// Offset of the second oscillator's Rayleigh number: `r2 = r - 10`.
pub const R2_OFFSET: f64 = 10.0;

impl SystemParams {
    pub fn new(sigma: f64, r: f64, b: f64) -> Self {
        SystemParams {
            sigma,
            r,
            b,
            lambda1: DEFAULT_COUPLING,
            lambda2: DEFAULT_COUPLING,
        }
    }

    pub fn with_coupling(mut self, lambda1: f64, lambda2: f64) -> Self {
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma, self.r, self.b, self.lambda1, self.lambda2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite parameters {self:?}")));
        }
        if self.b <= 0.0 {
            return Err(Error::contract(format!("b must be positive, got {}", self.b)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.sigma, self.r, self.b, self.lambda1, self.lambda2]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        SystemParams {
            sigma: a[0],
            r: a[1],
            b: a[2],
            lambda1: a[3],
            lambda2: a[4],
        }
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams::new(10.0, 28.0, 8.0 / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Lorenz,
    CoupledLorenz,
}

impl SystemKind {
    pub fn dim(self) -> usize {
        match self {
            SystemKind::Lorenz => 3,
            SystemKind::CoupledLorenz => 6,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            SystemKind::Lorenz => 0,
            SystemKind::CoupledLorenz => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(SystemKind::Lorenz),
            1 => Some(SystemKind::CoupledLorenz),
            _ => None,
        }
    }

    /// Generic starting point off the stable manifolds of the trivial equilibria.
    pub fn default_initial_state(self) -> StateVector {
        match self {
            SystemKind::Lorenz => StateVector(vec![1.0, 1.0, 1.0]),
            SystemKind::CoupledLorenz => StateVector(vec![1.0, 1.0, 1.0, 1.1, 0.9, 1.0]),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Lorenz => "lorenz",
            SystemKind::CoupledLorenz => "coupled",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" => Ok(SystemKind::Lorenz),
            "coupled" | "coupled-lorenz" | "coupledlorenz" => Ok(SystemKind::CoupledLorenz),
            other => Err(Error::Config(format!("unknown system '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn to_array<const N: usize>(&self) -> Result<[f64; N]> {
        self.0
            .as_slice()
            .try_into()
            .map_err(|_| Error::contract(format!("state has length {}, system needs {N}", self.0.len())))
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub params: SystemParams,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, params: SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(SystemSpec { kind, params })
    }

    pub fn lorenz(params: SystemParams) -> Result<Self> {
        Self::new(SystemKind::Lorenz, params)
    }

    pub fn coupled(params: SystemParams) -> Result<Self> {
        Self::new(SystemKind::CoupledLorenz, params)
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Trace of the Jacobian, which is the same at every state.
    pub fn divergence(&self) -> f64 {
        let p = &self.params;
        let single = -(p.sigma + 1.0 + p.b);
        match self.kind {
            SystemKind::Lorenz => single,
            SystemKind::CoupledLorenz => 2.0 * single,
        }
    }

    pub(crate) fn lorenz_field(&self) -> Lorenz {
        Lorenz {
            sigma: self.params.sigma,
            r: self.params.r,
            b: self.params.b,
        }
    }

    pub(crate) fn coupled_field(&self) -> CoupledLorenz {
        let p = &self.params;
        CoupledLorenz {
            sigma: p.sigma,
            r1: p.r,
            r2: p.r - R2_OFFSET,
            b: p.b,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
        }
    }

    fn check_dim(&self, s: &StateVector) -> Result<()> {
        if s.len() != self.dim() {
            return Err(Error::contract(format!(
                "{} state must have length {}, got {}",
                self.kind,
                self.dim(),
                s.len()
            )));
        }
        Ok(())
    }

    pub fn rhs(&self, s: &StateVector) -> Result<StateVector> {
        self.check_dim(s)?;
        Ok(match self.kind {
            SystemKind::Lorenz => self.lorenz_field().rhs(&s.to_array()?).to_vec().into(),
            SystemKind::CoupledLorenz => self.coupled_field().rhs(&s.to_array()?).to_vec().into(),
        })
    }

    pub fn jacobian(&self, s: &StateVector) -> Result<DMatrix<f64>> {
        self.check_dim(s)?;
        Ok(match self.kind {
            SystemKind::Lorenz => rows_to_matrix(&self.lorenz_field().jacobian(&s.to_array()?)),
            SystemKind::CoupledLorenz => rows_to_matrix(&self.coupled_field().jacobian(&s.to_array()?)),
        })
    }
}

fn rows_to_matrix<const N: usize>(rows: &[[f64; N]; N]) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |i, j| rows[i][j])
}

/// Runs `$body` with `$field` bound to the concrete vector field behind a [`SystemSpec`].
macro_rules! with_field {
    ($spec:expr, $field:ident => $body:expr) => {
        match $spec.kind {
            $crate::dynsys::SystemKind::Lorenz => {
                let $field = $spec.lorenz_field();
                $body
            }
            $crate::dynsys::SystemKind::CoupledLorenz => {
                let $field = $spec.coupled_field();
                $body
            }
        }
    };
}
pub(crate) use with_field;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
}

impl VectorField<3> for Lorenz {
    #[inline(always)]
    fn rhs(&self, s: &[f64; 3]) -> [f64; 3] {
        let [x, y, z] = *s;
        [self.sigma * (y - x), -x * z + self.r * x - y, x * y - self.b * z]
    }

    #[inline(always)]
    fn jacobian(&self, s: &[f64; 3]) -> [[f64; 3]; 3] {
        let [x, y, z] = *s;
        [[-self.sigma, self.sigma, 0.0], [self.r - z, -1.0, -x], [y, x, -self.b]]
    }
}

/// Two Lorenz oscillators coupled through the `y` equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledLorenz {
    pub sigma: f64,
    pub r1: f64,
    pub r2: f64,
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl VectorField<6> for CoupledLorenz {
    #[inline(always)]
    fn rhs(&self, s: &[f64; 6]) -> [f64; 6] {
        let [x1, y1, z1, x2, y2, z2] = *s;
        [
            self.sigma * (y1 - x1),
            -x1 * z1 + self.r1 * x1 - y1 + self.lambda1 * (x2 - y2),
            x1 * y1 - self.b * z1,
            self.sigma * (y2 - x2),
            -x2 * z2 + self.r2 * x2 - y2 + self.lambda2 * (x1 - y1),
            x2 * y2 - self.b * z2,
        ]
    }

    #[inline(always)]
    fn jacobian(&self, s: &[f64; 6]) -> [[f64; 6]; 6] {
        let [x1, y1, z1, x2, y2, z2] = *s;
        let (sg, b, l1, l2) = (self.sigma, self.b, self.lambda1, self.lambda2);
        [
            [-sg, sg, 0.0, 0.0, 0.0, 0.0],
            [self.r1 - z1, -1.0, -x1, l1, -l1, 0.0],
            [y1, x1, -b, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -sg, sg, 0.0],
            [l2, -l2, 0.0, self.r2 - z2, -1.0, -x2],
            [0.0, 0.0, 0.0, y2, x2, -b],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lorenz_std() -> SystemSpec {
        SystemSpec::lorenz(SystemParams::default()).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, kind: SystemKind) -> SystemSpec {
        let params = SystemParams::new(
            rng.random_range(5.0..15.0),
            rng.random_range(0.0..300.0),
            rng.random_range(2.0..3.0),
        )
        .with_coupling(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        SystemSpec::new(kind, params).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> StateVector {
        StateVector((0..dim).map(|_| rng.random_range(-30.0..30.0)).collect())
    }

    #[test]
    fn rhs_at_one_one_one() {
        let d = lorenz_std().rhs(&StateVector(vec![1.0, 1.0, 1.0])).unwrap();
        assert_close!(d.0[0], 0.0, 1e-15);
        assert_close!(d.0[1], 26.0, 1e-14);
        assert_close!(d.0[2], -5.0 / 3.0, 1e-14);
    }

    #[test]
    fn origin_is_fixed_for_both_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [SystemKind::Lorenz, SystemKind::CoupledLorenz] {
            for _ in 0..20 {
                let spec = random_spec(&mut rng, kind);
                let d = spec.rhs(&StateVector(vec![0.0; kind.dim()])).unwrap();
                assert!(d.0.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn jacobian_at_origin_and_third_row() {
        let spec = lorenz_std();
        let j = spec.jacobian(&StateVector(vec![0.0; 3])).unwrap();
        let expected = [[-10.0, 10.0, 0.0], [28.0, -1.0, 0.0], [0.0, 0.0, -8.0 / 3.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert_close!(j[(i, k)], expected[i][k], 1e-15);
            }
        }
        let j = spec.jacobian(&StateVector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_close!(j[(2, 0)], 2.0, 0.0);
        assert_close!(j[(2, 1)], 1.0, 0.0);
        assert_close!(j[(2, 2)], -8.0 / 3.0, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = lorenz_std();
        assert!(matches!(spec.rhs(&StateVector(vec![0.0; 6])), Err(Error::Contract(_))));
        let coupled = SystemSpec::coupled(SystemParams::default()).unwrap();
        assert!(coupled.jacobian(&StateVector(vec![0.0; 3])).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SystemSpec::lorenz(SystemParams::new(10.0, 28.0, 0.0)).is_err());
        assert!(SystemSpec::lorenz(SystemParams::new(10.0, f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn trace_is_state_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [SystemKind::Lorenz, SystemKind::CoupledLorenz] {
            let spec = random_spec(&mut rng, kind);
            for _ in 0..100 {
                let s = random_state(&mut rng, kind.dim());
                let j = spec.jacobian(&s).unwrap();
                assert_close!(j.trace(), spec.divergence(), 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for draw in 0..20 {
            let kind = if draw % 2 == 0 {
                SystemKind::Lorenz
            } else {
                SystemKind::CoupledLorenz
            };
            let spec = random_spec(&mut rng, kind);
            let s = random_state(&mut rng, kind.dim());
            let j = spec.jacobian(&s).unwrap();
            let n = kind.dim();
            let scale = j.abs().max();
            for col in 0..n {
                let mut plus = s.clone();
                let mut minus = s.clone();
                plus.0[col] += h;
                minus.0[col] -= h;
                let fp = spec.rhs(&plus).unwrap();
                let fm = spec.rhs(&minus).unwrap();
                for row in 0..n {
                    let fd = (fp.0[row] - fm.0[row]) / (2.0 * h);
                    // relative to the Jacobian's scale; exact entries of zero stay near zero
                    let err = (fd - j[(row, col)]).abs() / scale;
                    assert!(err < 1e-6, "draw {draw} ({row},{col}): fd {fd} vs {}", j[(row, col)]);
                }
            }
        }
    }

    #[test]
    fn coupled_uses_shifted_second_rayleigh_number() {
        let spec = SystemSpec::coupled(SystemParams::new(10.0, 28.0, 8.0 / 3.0)).unwrap();
        // x2 = 1, everything else zero: only r2 * x2 and the coupling term survive in y2'
        let d = spec.rhs(&StateVector(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_close!(d.0[4], 18.0, 1e-14);
        assert_close!(d.0[1], 0.1, 1e-15);
        assert_close!(d.0[3], -10.0, 1e-15);
    }

    #[test]
    fn system_kind_round_trips() {
        for kind in [SystemKind::Lorenz, SystemKind::CoupledLorenz] {
            assert_eq!(SystemKind::from_id(kind.id()), Some(kind));
            assert_eq!(kind.to_string().parse::<SystemKind>().unwrap(), kind);
            assert_eq!(kind.default_initial_state().len(), kind.dim());
        }
        assert!("rossler".parse::<SystemKind>().is_err());
    }
}
