use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{average_reference, dot, norm, Dipole, HeadModel, Montage};
use crate::error::{Error, Result};

/// Highest Legendre degree summed by default.
pub const DEFAULT_MAX_DEGREE: usize = 100;

/// Stop once two consecutive degrees add less than this, relative to the largest potential.
const SERIES_TOLERANCE: f64 = 1e-12;
/// A last term above this (relative) at `max_degree` is reported as non-convergence.
const SERIES_FAILURE: f64 = 1e-6;

/// Scalp potentials of a current dipole in concentric shells, by Legendre series.
///
/// For each degree `n` the potential is `Aₙ rⁿ + Bₙ r^-(n+1)` inside every shell.
/// The ratio of the growing part to the total is carried inward from the
/// insulated scalp, across each interface (continuity of potential and normal
/// current), down to the innermost shell that holds the source. Only these
/// bounded ratios are propagated, so high degrees neither overflow nor underflow.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    head: HeadModel,
    max_degree: usize,
    /// `coefficients[n - 1]` maps the innermost-shell source term of degree `n` to the scalp.
    coefficients: Vec<f64>,
}

impl ForwardModel {
    pub fn new(head: &HeadModel, max_degree: usize) -> Result<Self> {
        head.validate()?;
        if max_degree == 0 {
            return Err(Error::Validation("forward model needs max_degree >= 1".into()));
        }
        let coefficients = (1..=max_degree).map(|n| scalp_coefficient(n, head)).collect();
        Ok(ForwardModel {
            head: head.clone(),
            max_degree,
            coefficients,
        })
    }

    pub fn head(&self) -> &HeadModel {
        &self.head
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Unreferenced potentials at `positions` (taken to lie on the scalp; only their
    /// directions are used).
    pub fn raw_potentials(&self, dipole: &Dipole, positions: &[[f64; 3]]) -> Result<Vec<f64>> {
        let lead = self.lead_vectors(&dipole.position, positions)?;
        Ok(lead.iter().map(|l| dot(l, &dipole.moment)).collect())
    }

    /// Average-referenced lead field: column `k` is the map of a unit moment along axis `k`.
    pub fn leadfield(&self, position: &[f64; 3], positions: &[[f64; 3]]) -> Result<DMatrix<f64>> {
        let lead = self.lead_vectors(position, positions)?;
        let mut l = DMatrix::from_fn(positions.len(), 3, |i, k| lead[i][k]);
        for mut col in l.column_iter_mut() {
            average_reference(col.as_mut_slice());
        }
        Ok(l)
    }

    /// Gradient of the scalp potential with respect to the moment, per electrode.
    fn lead_vectors(&self, position: &[f64; 3], positions: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
        let r1 = self.head.inner_radius();
        let r0 = norm(position);
        if !(r0 < r1) {
            return Err(Error::Domain(format!(
                "dipole at {position:?} is {r0:.2} mm from the centre, outside the {r1} mm inner shell"
            )));
        }
        let ecc = r0 / r1;
        let dir0 = if r0 > 0.0 {
            [position[0] / r0, position[1] / r0, position[2] / r0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let scale = 1.0 / (4.0 * PI * self.head.conductivities[0] * r1 * r1);
        let dirs: Vec<[f64; 3]> = positions
            .iter()
            .map(|p| {
                let r = norm(p);
                [p[0] / r, p[1] / r, p[2] / r]
            })
            .collect();
        let cosines: Vec<f64> = dirs.iter().map(|d| dot(d, &dir0)).collect();
        // Legendre values and derivatives at degrees n - 1 and n, per electrode
        let mut p_prev = vec![1.0; positions.len()];
        let mut p_cur = cosines.clone();
        let mut dp_prev = vec![0.0; positions.len()];
        let mut dp_cur = vec![1.0; positions.len()];
        let mut lead = vec![[0.0; 3]; positions.len()];
        let mut ecc_pow = 1.0;
        let mut quiet = 0;
        let mut last_rel = f64::INFINITY;
        for n in 1..=self.max_degree {
            let nf = n as f64;
            let c = self.coefficients[n - 1] * ecc_pow * scale;
            let mut term_max = 0.0f64;
            for i in 0..positions.len() {
                let u = cosines[i];
                let radial = nf * p_cur[i] - u * dp_cur[i];
                let tangential = dp_cur[i];
                for k in 0..3 {
                    let t = c * (radial * dir0[k] + tangential * dirs[i][k]);
                    lead[i][k] += t;
                    term_max = term_max.max(t.abs());
                }
            }
            let sum_max = lead.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            last_rel = if sum_max > 0.0 { term_max / sum_max } else { 0.0 };
            if last_rel < SERIES_TOLERANCE || term_max == 0.0 {
                quiet += 1;
                if quiet == 2 {
                    return Ok(lead);
                }
            } else {
                quiet = 0;
            }
            for i in 0..positions.len() {
                let u = cosines[i];
                let p_next = ((2.0 * nf + 1.0) * u * p_cur[i] - nf * p_prev[i]) / (nf + 1.0);
                let dp_next = dp_prev[i] + (2.0 * nf + 1.0) * p_cur[i];
                p_prev[i] = p_cur[i];
                p_cur[i] = p_next;
                dp_prev[i] = dp_cur[i];
                dp_cur[i] = dp_next;
            }
            ecc_pow *= ecc;
        }
        if last_rel > SERIES_FAILURE {
            return Err(Error::SeriesNonConvergence(format!(
                "Legendre series for a dipole at eccentricity {ecc:.3} still changes by {last_rel:.1e} (relative) at degree {}",
                self.max_degree
            )));
        }
        Ok(lead)
    }
}

/// Scalp factor of degree `n`, relative to the source term at the innermost interface.
fn scalp_coefficient(n: usize, head: &HeadModel) -> f64 {
    let nf = n as f64;
    let k = 2.0 * nf + 1.0;
    let r = &head.radii;
    let s = &head.conductivities;
    // fraction of the potential carried by the rⁿ part; the scalp is insulated
    let mut g = (nf + 1.0) / k;
    let mut ratio = 1.0;
    for j in (1..4).rev() {
        let rho = r[j - 1] / r[j];
        let p = rho.powi(2 * n as i32 + 1);
        let g_in = g * p / (g * p + 1.0 - g);
        ratio *= g_in / (rho.powi(n as i32) * g);
        g = ((s[j] / s[j - 1]) * (k * g_in - (nf + 1.0)) + nf + 1.0) / k;
    }
    ratio / (1.0 - g)
}

/// Average-referenced potentials at the fitted electrodes of `montage`.
pub fn forward_potential(
    dipole: &Dipole,
    montage: &Montage,
    head: &HeadModel,
    max_degree: usize,
) -> Result<Vec<f64>> {
    montage.validate(head)?;
    let model = ForwardModel::new(head, max_degree)?;
    let mut v = model.raw_potentials(dipole, &montage.fit_positions(head))?;
    average_reference(&mut v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form potential on the surface of a homogeneous sphere.
    fn homogeneous(d: &Dipole, r: &[f64; 3], sigma: f64) -> f64 {
        let dv = [r[0] - d.position[0], r[1] - d.position[1], r[2] - d.position[2]];
        let dn = norm(&dv);
        let rn = norm(r);
        let denom = rn * dn * (rn * dn + dot(r, &dv));
        let f: Vec<f64> = (0..3)
            .map(|k| 2.0 * dv[k] / dn.powi(3) + (dn * r[k] + rn * dv[k]) / denom)
            .collect();
        (f[0] * d.moment[0] + f[1] * d.moment[1] + f[2] * d.moment[2]) / (4.0 * PI * sigma)
    }

    fn random_dipole(rng: &mut ChaCha8Rng, r_max: f64) -> Dipole {
        let position = loop {
            let p = [
                rng.random_range(-r_max..r_max),
                rng.random_range(-r_max..r_max),
                rng.random_range(-r_max..r_max),
            ];
            if norm(&p) < r_max {
                break p;
            }
        };
        let moment = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        Dipole { position, moment }
    }

    fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn equal_conductivities_match_closed_form() {
        let head = HeadModel::homogeneous([71.0, 72.0, 79.0, 85.0], 0.33).unwrap();
        let montage = Montage::spherical_cap(64, 85.0, 0);
        let positions = montage.scalp_positions(&head);
        let model = ForwardModel::new(&head, DEFAULT_MAX_DEGREE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let d = random_dipole(&mut rng, 0.9 * 71.0);
            let mut series = model.raw_potentials(&d, &positions).unwrap();
            let mut exact: Vec<f64> = positions.iter().map(|p| homogeneous(&d, p, 0.33)).collect();
            average_reference(&mut series);
            average_reference(&mut exact);
            let err = max_rel_error(&series, &exact);
            assert!(err < 1e-6, "dipole {d:?}: relative error {err:e}");
        }
    }

    #[test]
    fn radial_dipole_on_axis() {
        // Σ (2n+1) xⁿ⁻¹ = 2/(1-x)² + 1/(1-x)
        let head = HeadModel::homogeneous([10.0, 20.0, 30.0, 40.0], 1.0).unwrap();
        let model = ForwardModel::new(&head, DEFAULT_MAX_DEGREE).unwrap();
        let a = 5.0;
        let v = model
            .raw_potentials(&Dipole { position: [0.0, 0.0, a], moment: [0.0, 0.0, 1.0] }, &[[0.0, 0.0, 40.0]])
            .unwrap()[0];
        let expected = (2.0 / (40.0f64 - a).powi(2) + 1.0 / (40.0 * (40.0 - a))) / (4.0 * PI);
        assert!((v - expected).abs() < 1e-12 * expected, "{v} vs {expected}");
    }

    #[test]
    fn centred_dipole_is_a_cosine_pattern() {
        let head = HeadModel::default();
        let model = ForwardModel::new(&head, DEFAULT_MAX_DEGREE).unwrap();
        let positions = Montage::spherical_cap(20, 85.0, 0).scalp_positions(&head);
        let v = model
            .raw_potentials(&Dipole { position: [0.0; 3], moment: [0.0, 0.0, 1.0] }, &positions)
            .unwrap();
        let top = v[0] / (positions[0][2] / 85.0);
        for (p, x) in positions.iter().zip(&v) {
            assert!((x - top * p[2] / 85.0).abs() < 1e-12 * top.abs());
        }
    }

    #[test]
    fn linear_in_moment_and_inverse_in_conductivity() {
        let head = HeadModel::default();
        let model = ForwardModel::new(&head, DEFAULT_MAX_DEGREE).unwrap();
        let positions = Montage::default().scalp_positions(&head);
        let p = [10.0, -20.0, 30.0];
        let vx = model.raw_potentials(&Dipole { position: p, moment: [1.0, 0.0, 0.0] }, &positions).unwrap();
        let vz = model.raw_potentials(&Dipole { position: p, moment: [0.0, 0.0, 1.0] }, &positions).unwrap();
        let vc = model.raw_potentials(&Dipole { position: p, moment: [2.0, 0.0, -3.0] }, &positions).unwrap();
        for i in 0..positions.len() {
            assert!((vc[i] - (2.0 * vx[i] - 3.0 * vz[i])).abs() < 1e-12 * vc[i].abs().max(1e-3));
        }
        let doubled = HeadModel::new(head.radii, head.conductivities.map(|c| 2.0 * c)).unwrap();
        let v2 = ForwardModel::new(&doubled, DEFAULT_MAX_DEGREE)
            .unwrap()
            .raw_potentials(&Dipole { position: p, moment: [1.0, 0.0, 0.0] }, &positions)
            .unwrap();
        assert!(max_rel_error(&v2.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), &vx) < 1e-12);
    }

    #[test]
    fn skull_attenuates_and_smears() {
        let positions = Montage::default().scalp_positions(&HeadModel::default());
        let d = Dipole { position: [0.0, 0.0, 60.0], moment: [0.0, 0.0, 1.0] };
        let layered = ForwardModel::new(&HeadModel::default(), DEFAULT_MAX_DEGREE).unwrap();
        let plain = ForwardModel::new(&HeadModel::homogeneous([71.0, 72.0, 79.0, 85.0], 0.33).unwrap(), DEFAULT_MAX_DEGREE)
            .unwrap();
        let peak = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(peak(layered.raw_potentials(&d, &positions).unwrap()) < peak(plain.raw_potentials(&d, &positions).unwrap()));
    }

    #[test]
    fn rejects_dipole_outside_brain() {
        let model = ForwardModel::new(&HeadModel::default(), DEFAULT_MAX_DEGREE).unwrap();
        let err = model
            .raw_potentials(&Dipole { position: [0.0, 0.0, 75.0], moment: [0.0, 0.0, 1.0] }, &[[0.0, 0.0, 85.0]])
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn truncated_series_is_reported() {
        let head = HeadModel::homogeneous([71.0, 72.0, 79.0, 85.0], 1.0).unwrap();
        let model = ForwardModel::new(&head, 5).unwrap();
        let err = model
            .raw_potentials(&Dipole { position: [0.0, 0.0, 69.0], moment: [0.0, 0.0, 1.0] }, &[[0.0, 0.0, 85.0], [85.0, 0.0, 0.0]])
            .unwrap_err();
        assert!(matches!(err, Error::SeriesNonConvergence(_)), "{err}");
    }

    #[test]
    fn montage_reference_is_zero_mean() {
        let head = HeadModel::default();
        let m = Montage::default();
        let v = forward_potential(&Dipole { position: [20.0, 10.0, 40.0], moment: [0.3, 0.4, 0.5] }, &m, &head, DEFAULT_MAX_DEGREE)
            .unwrap();
        assert_eq!(v.len(), 69);
        assert!(v.iter().sum::<f64>().abs() < 1e-12);
    }
}
