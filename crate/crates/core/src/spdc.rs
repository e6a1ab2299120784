//! Photonic source model: a visibility-degraded non-maximally entangled
//! polarization state measured by lossy threshold detectors with dark counts,
//! combined over Poissonian multi-pair emission.
//!
//! Outcome vectors are ordered (00, 01, 10, 11) with 0 = click.

use crate::correlations::{Behavior, CorrelationsError, N_X, N_Y};
use nalgebra::{Complex, Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum SpdcError {
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("density matrix violates positivity (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("beta tensor is not a partition at entry ({0},{1})")]
    BadPartition(usize, usize),
    #[error(transparent)]
    Behavior(#[from] CorrelationsError),
}

/// Physical model parameters. Angles are Bloch angles in radians; the JSON
/// form stores degrees (`angles_a_deg`, `angles_b_deg`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdcParams {
    /// State asymmetry of (|HV> + r|VH>)/sqrt(1+r^2).
    pub r: f64,
    pub visibility: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub dark_count: f64,
    pub mean_photon: f64,
    pub angles_a: [f64; N_X],
    pub angles_b: [f64; N_Y],
    /// Poisson truncation order.
    pub max_pairs: usize,
}

#[derive(Serialize, Deserialize)]
struct SpdcParamsWire {
    r: f64,
    visibility: f64,
    eta_a: f64,
    eta_b: f64,
    dark_count: f64,
    mean_photon: f64,
    angles_a_deg: [f64; N_X],
    angles_b_deg: [f64; N_Y],
    #[serde(default = "default_max_pairs")]
    max_pairs: usize,
}

fn default_max_pairs() -> usize {
    3
}

impl Serialize for SpdcParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpdcParamsWire {
            r: self.r,
            visibility: self.visibility,
            eta_a: self.eta_a,
            eta_b: self.eta_b,
            dark_count: self.dark_count,
            mean_photon: self.mean_photon,
            angles_a_deg: self.angles_a.map(f64::to_degrees),
            angles_b_deg: self.angles_b.map(f64::to_degrees),
            max_pairs: self.max_pairs,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdcParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = SpdcParamsWire::deserialize(d)?;
        Ok(SpdcParams {
            r: w.r,
            visibility: w.visibility,
            eta_a: w.eta_a,
            eta_b: w.eta_b,
            dark_count: w.dark_count,
            mean_photon: w.mean_photon,
            angles_a: w.angles_a_deg.map(f64::to_radians),
            angles_b: w.angles_b_deg.map(f64::to_radians),
            max_pairs: w.max_pairs,
        })
    }
}

impl SpdcParams {
    pub fn validate(&self) -> Result<(), SpdcError> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SpdcError::OutOfRange { name, value, range: "[0,1]" })
            }
        };
        unit("r", self.r)?;
        unit("visibility", self.visibility)?;
        unit("eta_a", self.eta_a)?;
        unit("eta_b", self.eta_b)?;
        unit("dark_count", self.dark_count)?;
        if self.mean_photon < 0.0 {
            return Err(SpdcError::OutOfRange {
                name: "mean_photon",
                value: self.mean_photon,
                range: "[0,inf)",
            });
        }
        if self.max_pairs < 1 {
            return Err(SpdcError::OutOfRange {
                name: "max_pairs",
                value: self.max_pairs as f64,
                range: "[1,inf)",
            });
        }
        Ok(())
    }
}

/// Two-qubit polarization state in the (HH, HV, VH, VV) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(Matrix4<C64>);

impl DensityMatrix4 {
    /// Validates hermiticity, unit trace and positivity. Clipping is refused:
    /// eigenvalues below -1e-10 are an error.
    pub fn new(m: Matrix4<C64>) -> Result<Self, SpdcError> {
        let herm = (m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(SpdcError::OutOfRange {
                name: "hermiticity defect",
                value: herm,
                range: "<=1e-10",
            });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(SpdcError::OutOfRange {
                name: "trace",
                value: tr.re,
                range: "1 +- 1e-12",
            });
        }
        let min_ev = m
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::MAX, f64::min);
        if min_ev < -1e-10 {
            return Err(SpdcError::NotPsd(min_ev));
        }
        Ok(DensityMatrix4(m))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = self.0.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// Overlap with the pure target state of asymmetry `r`.
    pub fn fidelity_with_target(&self, r: f64) -> f64 {
        let psi = target_state(r);
        (psi.adjoint() * self.0 * psi)[(0, 0)].re
    }
}

fn target_state(r: f64) -> Vector4<C64> {
    let n = 1.0 / (1.0 + r * r).sqrt();
    Vector4::new(
        C64::new(0.0, 0.0),
        C64::new(n, 0.0),
        C64::new(n * r, 0.0),
        C64::new(0.0, 0.0),
    )
}

/// V |psi_r><psi_r| + (1-V) I/4.
pub fn werner_state(r: f64, visibility: f64) -> Result<DensityMatrix4, SpdcError> {
    for (name, value) in [("r", r), ("visibility", visibility)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(SpdcError::OutOfRange { name, value, range: "[0,1]" });
        }
    }
    let psi = target_state(r);
    let pure = psi * psi.adjoint();
    let m = pure * C64::new(visibility, 0.0)
        + Matrix4::identity() * C64::new((1.0 - visibility) / 4.0, 0.0);
    DensityMatrix4::new(m)
}

/// V = (4F - 1)/3, inverting F = (1 + 3V)/4.
pub fn fidelity_to_visibility(fidelity: f64) -> Result<f64, SpdcError> {
    if !(0.25..=1.0).contains(&fidelity) {
        return Err(SpdcError::OutOfRange {
            name: "fidelity",
            value: fidelity,
            range: "[0.25,1]",
        });
    }
    Ok((4.0 * fidelity - 1.0) / 3.0)
}

fn bloch_plane(phi: f64) -> Matrix2<C64> {
    // cos(phi) sigma_z + sin(phi) sigma_x
    let (s, c) = phi.sin_cos();
    Matrix2::new(
        C64::new(c, 0.0),
        C64::new(s, 0.0),
        C64::new(s, 0.0),
        C64::new(-c, 0.0),
    )
}

/// Click effect of a threshold detector behind a polarization projection at
/// Bloch angle `phi`: [1-(1-p_d)(1-eta)] (I+Pi)/2 + p_d (I-Pi)/2.
pub fn measurement_effect(phi: f64, eta: f64, p_d: f64) -> Result<Matrix2<C64>, SpdcError> {
    for (name, value) in [("eta", eta), ("p_d", p_d)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(SpdcError::OutOfRange { name, value, range: "[0,1]" });
        }
    }
    let pi = bloch_plane(phi);
    let id = Matrix2::identity();
    let plus = (id + pi) * C64::new(0.5, 0.0);
    let minus = (id - pi) * C64::new(0.5, 0.0);
    Ok(plus * C64::new(1.0 - (1.0 - p_d) * (1.0 - eta), 0.0) + minus * C64::new(p_d, 0.0))
}

/// The four 0/1 coefficient matrices combining two pair outcomes into one:
/// a detector clicks if either pair fired it.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTensor([[[u8; 4]; 4]; 4]);

impl BetaTensor {
    pub fn standard() -> Self {
        BetaTensor([
            [[1, 1, 1, 1], [1, 0, 1, 0], [1, 1, 0, 0], [1, 0, 0, 0]],
            [[0, 0, 0, 0], [0, 1, 0, 1], [0, 0, 0, 0], [0, 1, 0, 0]],
            [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 1], [0, 0, 1, 0]],
            [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]],
        ])
    }

    /// Validates the partition invariant: every (i,j) belongs to exactly one k.
    pub fn new(m: [[[u8; 4]; 4]; 4]) -> Result<Self, SpdcError> {
        for i in 0..4 {
            for j in 0..4 {
                let s: u8 = (0..4).map(|k| m[k][i][j]).sum();
                if s != 1 {
                    return Err(SpdcError::BadPartition(i, j));
                }
            }
        }
        Ok(BetaTensor(m))
    }

    pub fn coeff(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][i][j] as f64
    }
}

impl Default for BetaTensor {
    fn default() -> Self {
        let b = Self::standard();
        BetaTensor::new(b.0).expect("standard tensor is a partition")
    }
}

/// Outcome distribution of a single emitted pair under setting (x,y).
pub fn single_pair_probs(params: &SpdcParams, x: usize, y: usize) -> Result<[f64; 4], SpdcError> {
    params.validate()?;
    let rho = werner_state(params.r, params.visibility)?;
    let ma0 = measurement_effect(params.angles_a[x], params.eta_a, params.dark_count)?;
    let mb0 = measurement_effect(params.angles_b[y], params.eta_b, params.dark_count)?;
    let ma1 = Matrix2::identity() - ma0;
    let mb1 = Matrix2::identity() - mb0;
    let mut out = [0.0; 4];
    for (k, (ma, mb)) in [(&ma0, &mb0), (&ma0, &mb1), (&ma1, &mb0), (&ma1, &mb1)]
        .into_iter()
        .enumerate()
    {
        out[k] = (rho.matrix() * ma.kronecker(mb)).trace().re;
    }
    Ok(out)
}

/// Combines two independent pair-outcome distributions: clicks accumulate.
pub fn multipair_combine(p: &[f64; 4], q: &[f64; 4], beta: &BetaTensor) -> [f64; 4] {
    let mut out = [0.0; 4];
    for k in 0..4 {
        for i in 0..4 {
            for j in 0..4 {
                out[k] += beta.coeff(k, i, j) * p[i] * q[j];
            }
        }
    }
    out
}

/// Poisson weight of exactly n pairs at mean `u`.
fn poisson(u: f64, n: usize) -> f64 {
    let mut w = (-u).exp();
    for k in 1..=n {
        w *= u / k as f64;
    }
    w
}

/// Full model behavior: Poisson mixture over 0..=max_pairs emitted pairs,
/// renormalized so each conditional distribution sums to exactly 1 (the
/// truncated tail is redistributed proportionally).
pub fn behavior_from_model(params: &SpdcParams) -> Result<Behavior, SpdcError> {
    params.validate()?;
    let beta = BetaTensor::standard();
    let p_d = params.dark_count;
    let vacuum = [
        p_d * p_d,
        p_d * (1.0 - p_d),
        p_d * (1.0 - p_d),
        (1.0 - p_d) * (1.0 - p_d),
    ];
    let u = params.mean_photon;
    let mut flat = [0.0; 24];
    for x in 0..N_X {
        for y in 0..N_Y {
            let p1 = single_pair_probs(params, x, y)?;
            let mut dist = [0.0; 4];
            let mut norm = 0.0;
            let mut pn = vacuum;
            for n in 0..=params.max_pairs {
                if n == 1 {
                    pn = p1;
                } else if n >= 2 {
                    pn = multipair_combine(&pn, &p1, &beta);
                }
                let w = poisson(u, n);
                norm += w;
                for k in 0..4 {
                    dist[k] += w * pn[k];
                }
            }
            for (k, &(a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                flat[((a * 2 + b) * N_X + x) * N_Y + y] = dist[k] / norm;
            }
        }
    }
    Ok(Behavior::new(flat)?)
}

/// Converts a half-wave-plate setting in degrees to the model's Bloch angle.
/// A plate at angle theta selects the linear polarization at -2*theta.
pub fn hwp_deg_to_bloch(theta_deg: f64) -> f64 {
    (-2.0 * theta_deg).to_radians()
}

/// Parameters of the bundled 20 m reference dataset. The measurement angles
/// are effective values calibrated against the dataset's projected
/// distribution; the wave-plate setpoints alone do not reproduce it.
pub fn reference_20m() -> SpdcParams {
    SpdcParams {
        r: (20.0f64).to_radians().tan(),
        visibility: (4.0 * 0.9952 - 1.0) / 3.0,
        eta_a: 0.8716,
        eta_b: 0.8782,
        dark_count: 1e-6,
        mean_photon: 0.040,
        angles_a: [3.041353428815, -1.803258068360],
        angles_b: [-0.366058515950, 0.816607944465, 0.023932540774],
        max_pairs: 3,
    }
}

/// Source/measurement configuration used for the dedicated CHSH game run
/// (bright pumping, two Bob settings; the third angle aligns with the key
/// basis and is unused by the score).
pub fn reference_chsh() -> SpdcParams {
    SpdcParams {
        r: (32.2f64).to_radians().tan(),
        visibility: (4.0 * 0.9952 - 1.0) / 3.0,
        eta_a: 0.8716,
        eta_b: 0.8782,
        dark_count: 1e-6,
        mean_photon: 0.62,
        angles_a: [hwp_deg_to_bloch(-81.09), hwp_deg_to_bloch(61.46)],
        angles_b: [hwp_deg_to_bloch(8.18), hwp_deg_to_bloch(-29.37), 0.0],
        // u = 0.62 needs a deeper truncation than the key-rate runs
        max_pairs: 6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::{chsh_score, no_signaling_residual};

    #[test]
    fn werner_pure_state_eigenvalues() {
        let rho = werner_state(1.0, 1.0).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        for e in &ev[1..] {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn werner_zero_visibility_is_maximally_mixed() {
        let rho = werner_state(0.7, 0.0).unwrap();
        for ev in rho.eigenvalues() {
            assert!((ev - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn werner_production_state_fidelity() {
        let r = (20.0f64).to_radians().tan();
        let v = fidelity_to_visibility(0.9952).unwrap();
        assert!((v - 0.99360).abs() < 1e-5);
        let rho = werner_state(r, v).unwrap();
        assert!((rho.fidelity_with_target(r) - 0.9952).abs() < 1e-12);
    }

    #[test]
    fn fidelity_to_visibility_bounds() {
        assert_eq!(fidelity_to_visibility(1.0).unwrap(), 1.0);
        assert!(fidelity_to_visibility(0.25).unwrap().abs() < 1e-15);
        assert!(fidelity_to_visibility(0.2).is_err());
        assert!(fidelity_to_visibility(1.1).is_err());
    }

    #[test]
    fn effect_limits() {
        let m = measurement_effect(0.3, 1.0, 0.0).unwrap();
        // rank-1 projector: M^2 = M, trace 1
        assert!(((m * m) - m).norm() < 1e-12);
        assert!((m.trace().re - 1.0).abs() < 1e-12);
        let z = measurement_effect(0.3, 0.0, 0.0).unwrap();
        assert!(z.norm() < 1e-12);
        let one = measurement_effect(0.3, 0.2, 1.0).unwrap();
        assert!((one - Matrix2::identity()).norm() < 1e-12);
    }

    #[test]
    fn effect_operator_bounds() {
        for &(phi, eta, pd) in &[(0.7, 0.87, 1e-6), (-2.0, 0.5, 0.3), (1.1, 0.0, 1.0)] {
            let m = measurement_effect(phi, eta, pd).unwrap();
            let ev = m.symmetric_eigenvalues();
            for e in ev.iter() {
                assert!(*e >= -1e-12 && *e <= 1.0 + 1e-12, "eigenvalue {e}");
            }
        }
    }

    #[test]
    fn single_pair_bell_state_anticorrelated() {
        let params = SpdcParams {
            r: 1.0,
            visibility: 1.0,
            eta_a: 1.0,
            eta_b: 1.0,
            dark_count: 0.0,
            mean_photon: 0.0,
            angles_a: [0.0, 0.0],
            angles_b: [0.0, 0.0, 0.0],
            max_pairs: 1,
        };
        let p = single_pair_probs(&params, 0, 0).unwrap();
        assert!(p[0].abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_pair_no_detection() {
        let params = SpdcParams {
            eta_a: 0.0,
            eta_b: 0.0,
            dark_count: 0.0,
            ..reference_20m()
        };
        let p = single_pair_probs(&params, 1, 2).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_partition_holds() {
        BetaTensor::standard();
        BetaTensor::new(BetaTensor::standard().0).unwrap();
        let mut bad = BetaTensor::standard().0;
        bad[0][1][2] = 0; // (i,j)=(1,2) belongs to k=0 alone
        assert!(matches!(BetaTensor::new(bad), Err(SpdcError::BadPartition(1, 2))));
    }

    #[test]
    fn combine_matches_click_union_on_all_deterministic_pairs() {
        // outcome index k: a-click iff k in {0,1}? No: ordering (00,01,10,11):
        // a clicks for k in {0,1} <=> a=0 <=> k/2 == 0 ; b clicks for k in {0,2}.
        let beta = BetaTensor::standard();
        let unit = |k: usize| {
            let mut v = [0.0; 4];
            v[k] = 1.0;
            v
        };
        for i in 0..4 {
            for j in 0..4 {
                let out = multipair_combine(&unit(i), &unit(j), &beta);
                let a_click = i < 2 || j < 2;
                let b_click = i % 2 == 0 || j % 2 == 0;
                let expect = (if a_click { 0 } else { 2 }) + if b_click { 0 } else { 1 };
                for (k, v) in out.iter().enumerate() {
                    let want = if k == expect { 1.0 } else { 0.0 };
                    assert_eq!(*v, want, "i={i} j={j} k={k}");
                }
            }
        }
    }

    #[test]
    fn combine_specific_cases() {
        let beta = BetaTensor::standard();
        let both = multipair_combine(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], &beta);
        assert_eq!(both, [1.0, 0.0, 0.0, 0.0]);
        let cross = multipair_combine(&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &beta);
        assert_eq!(cross, [1.0, 0.0, 0.0, 0.0]);
        let none = multipair_combine(&[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0], &beta);
        assert_eq!(none, [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn combine_commutes_and_associates() {
        let beta = BetaTensor::standard();
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.25, 0.15, 0.35, 0.25];
        let r = [0.4, 0.1, 0.2, 0.3];
        let pq = multipair_combine(&p, &q, &beta);
        let qp = multipair_combine(&q, &p, &beta);
        for k in 0..4 {
            assert!((pq[k] - qp[k]).abs() < 1e-15);
        }
        let left = multipair_combine(&multipair_combine(&p, &q, &beta), &r, &beta);
        let right = multipair_combine(&p, &multipair_combine(&q, &r, &beta), &beta);
        for k in 0..4 {
            assert!((left[k] - right[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn model_dark_counts_only_at_zero_pump() {
        let params = SpdcParams { mean_photon: 0.0, ..reference_20m() };
        let b = behavior_from_model(&params).unwrap();
        let pd = params.dark_count;
        for x in 0..N_X {
            for y in 0..N_Y {
                assert!((b.get(1, 1, x, y) - (1.0 - pd) * (1.0 - pd)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn model_matches_reference_projection() {
        // projected 20 m distribution, rows xy=11..23, columns P(1,1),P(1,0),P(0,1),P(0,0)
        let table: [[f64; 4]; 6] = [
            [0.9939848305625, 0.0016772430375, 0.0008783402625, 0.0034595861375],
            [0.9907551763625, 0.0049068972375, 0.0008862111125, 0.0034517152875],
            [0.9949539201500, 0.0007081534400, 0.0006388507000, 0.0036990757000],
            [0.9848486222042, 0.0008729597292, 0.0100145486208, 0.0042638694458],
            [0.9775156493042, 0.0082059326292, 0.0141257381708, 0.0001526798958],
            [0.9835762722167, 0.0021453097167, 0.0120164986333, 0.0022619194333],
        ];
        let b = behavior_from_model(&reference_20m()).unwrap();
        let mut worst: f64 = 0.0;
        for (i, row) in table.iter().enumerate() {
            let (x, y) = (i / 3, i % 3);
            let sim = [
                b.get(1, 1, x, y),
                b.get(1, 0, x, y),
                b.get(0, 1, x, y),
                b.get(0, 0, x, y),
            ];
            for (s, t) in sim.iter().zip(row) {
                worst = worst.max((s - t).abs());
            }
        }
        assert!(worst < 5e-3, "worst deviation {worst}");
        // calibration quality is much better than the contract bound
        assert!(worst < 5e-4, "worst deviation {worst}");
    }

    #[test]
    fn model_is_no_signaling() {
        for params in [reference_20m(), reference_chsh()] {
            let b = behavior_from_model(&params).unwrap();
            assert!(no_signaling_residual(&b) < 1e-12);
        }
    }

    #[test]
    fn truncation_deficit_formula() {
        // 1 - e^{-u} sum_{n<=3} u^n/n! at u = 0.04
        let u: f64 = 0.04;
        let kept: f64 = (0..=3).map(|n| poisson(u, n)).sum();
        let deficit = 1.0 - kept;
        assert!((deficit - 1.033096e-7).abs() < 1e-12, "deficit {deficit:.6e}");
    }

    #[test]
    fn chsh_configuration_score() {
        let b = behavior_from_model(&reference_chsh()).unwrap();
        let omega = chsh_score(&b, (0, 1));
        assert!((omega - 0.7559).abs() < 2e-3, "omega {omega}");
    }

    #[test]
    fn ideal_single_pair_reaches_tsirelson() {
        let params = SpdcParams {
            r: 1.0,
            visibility: 1.0,
            eta_a: 1.0,
            eta_b: 1.0,
            dark_count: 0.0,
            mean_photon: 0.0,
            angles_a: [0.0, std::f64::consts::FRAC_PI_2],
            angles_b: [
                3.0 * std::f64::consts::FRAC_PI_4,
                -3.0 * std::f64::consts::FRAC_PI_4,
                std::f64::consts::PI,
            ],
            max_pairs: 1,
        };
        let mut flat = [0.0; 24];
        for x in 0..N_X {
            for y in 0..N_Y {
                let p = single_pair_probs(&params, x, y).unwrap();
                for (k, &(a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    flat[((a * 2 + b) * N_X + x) * N_Y + y] = p[k];
                }
            }
        }
        let b = Behavior::new(flat).unwrap();
        let omega = chsh_score(&b, (0, 1));
        assert!(
            (omega - (2.0 + 2.0f64.sqrt()) / 4.0).abs() < 1e-9,
            "omega {omega}"
        );
    }

    #[test]
    fn efficiency_monotonicity_of_click_marginal() {
        let base = reference_20m();
        let mut prev = -1.0;
        for k in 0..=10 {
            let eta = 0.5 + 0.05 * k as f64;
            let params = SpdcParams { eta_a: eta, ..base.clone() };
            let b = behavior_from_model(&params).unwrap();
            let click = b.get(0, 0, 0, 0) + b.get(0, 1, 0, 0);
            assert!(click >= prev - 1e-12, "eta {eta}: {click} < {prev}");
            prev = click;
        }
    }

    #[test]
    fn brute_force_oracle_two_pairs() {
        // Independent enumeration for max_pairs <= 2: per-pair outcomes are
        // drawn i.i.d.; clicks OR-accumulate across pairs. No beta matrices.
        let params = SpdcParams { max_pairs: 2, ..reference_20m() };
        let model = behavior_from_model(&params).unwrap();
        let u = params.mean_photon;
        let pd = params.dark_count;
        let vacuum = [
            pd * pd,
            pd * (1.0 - pd),
            pd * (1.0 - pd),
            (1.0 - pd) * (1.0 - pd),
        ];
        let clicks = |k: usize| ((k < 2), (k % 2 == 0)); // (a clicks, b clicks)
        for x in 0..N_X {
            for y in 0..N_Y {
                let p1 = single_pair_probs(&params, x, y).unwrap();
                let mut dist = [0.0; 4];
                let mut norm = 0.0;
                for n in 0..=2usize {
                    let w = poisson(u, n);
                    norm += w;
                    if n == 0 {
                        for k in 0..4 {
                            dist[k] += w * vacuum[k];
                        }
                        continue;
                    }
                    // enumerate joint outcomes of n independent pairs; each
                    // pair outcome already accounts for dark counts
                    let mut stack = vec![(vec![], 1.0)];
                    for _ in 0..n {
                        let mut next = Vec::new();
                        for (seq, pr) in &stack {
                            for k in 0..4 {
                                let mut s = seq.clone();
                                s.push(k);
                                next.push((s, pr * p1[k]));
                            }
                        }
                        stack = next;
                    }
                    for (seq, pr) in stack {
                        let mut a_click = false;
                        let mut b_click = false;
                        for &k in &seq {
                            a_click |= clicks(k).0;
                            b_click |= clicks(k).1;
                        }
                        let out = (if a_click { 0 } else { 2 }) + if b_click { 0 } else { 1 };
                        dist[out] += w * pr;
                    }
                }
                for (k, &(a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let diff = (model.get(a, b, x, y) - dist[k] / norm).abs();
                    assert!(diff < 1e-12, "xy={x}{y} k={k} diff={diff:.2e}");
                }
            }
        }
    }

    #[test]
    fn params_json_uses_degrees() {
        let p = reference_20m();
        let j = serde_json::to_value(&p).unwrap();
        let a0 = j["angles_a_deg"][0].as_f64().unwrap();
        assert!((a0 - p.angles_a[0].to_degrees()).abs() < 1e-12);
        for key in [
            "r",
            "visibility",
            "eta_a",
            "eta_b",
            "dark_count",
            "mean_photon",
            "angles_a_deg",
            "angles_b_deg",
            "max_pairs",
        ] {
            assert!(j.get(key).is_some(), "missing {key}");
        }
        let back: SpdcParams = serde_json::from_value(j).unwrap();
        assert_eq!(back, p);
    }
}
