use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_reference, norm, Dipole, ForwardModel, HeadModel, Montage, DEFAULT_MAX_DEGREE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Spacing of the starting grid.
    pub grid_spacing_mm: f64,
    /// Search region as a fraction of the inner shell radius.
    pub search_fraction: f64,
    /// Nelder–Mead stops when every vertex is this close to the best one.
    pub position_tolerance_mm: f64,
    pub max_iterations: usize,
    pub max_degree: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid_spacing_mm: 8.0,
            search_fraction: 0.95,
            position_tolerance_mm: 1e-4,
            max_iterations: 2000,
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.grid_spacing_mm > 0.0)
            || !(self.search_fraction > 0.0 && self.search_fraction < 1.0)
            || !(self.position_tolerance_mm > 0.0)
            || self.max_iterations == 0
        {
            return Err(Error::Validation(format!("invalid dipole fit options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleFit {
    pub dipole: Dipole,
    /// Residual variance of the average-referenced map, in `[0, 1]`.
    pub rv: f64,
    /// Average-referenced model map at the fitted electrodes.
    pub projected_map: Vec<f64>,
    pub fit_iterations: usize,
    /// The optimum sits within 1 mm of the search boundary.
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFailure {
    pub component: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipolarityReport {
    /// Per component; `None` where the fit failed.
    pub fits: Vec<Option<DipoleFit>>,
    pub failures: Vec<ComponentFailure>,
    pub thresholds: Vec<f64>,
    /// Percentage of all components with `rv` strictly below each threshold.
    pub nd_percent: Vec<f64>,
}

impl DipolarityReport {
    pub fn rv(&self) -> Vec<Option<f64>> {
        self.fits.iter().map(|f| f.as_ref().map(|f| f.rv)).collect()
    }

    pub fn n_components(&self) -> usize {
        self.fits.len()
    }

    /// Percentage of components with `rv < threshold`.
    pub fn nd_at(&self, threshold: f64) -> f64 {
        nd_percent(&self.rv(), threshold)
    }
}

/// Residual-variance thresholds 1%, 2%, …, 40%.
pub fn default_thresholds() -> Vec<f64> {
    (1..=40).map(|k| k as f64 / 100.0).collect()
}

fn nd_percent(rv: &[Option<f64>], threshold: f64) -> f64 {
    if rv.is_empty() {
        return 0.0;
    }
    let hits = rv.iter().filter(|r| matches!(r, Some(v) if *v < threshold)).count();
    100.0 * hits as f64 / rv.len() as f64
}

/// Maps given either for every montage electrode or only for the fitted ones.
fn fitted_values(map: &[f64], montage: &Montage) -> Result<Vec<f64>> {
    let idx = montage.fit_indices();
    if map.len() == montage.len() {
        Ok(idx.iter().map(|&i| map[i]).collect())
    } else if map.len() == idx.len() {
        Ok(map.to_vec())
    } else {
        Err(Error::shape(
            format!("{} (all electrodes) or {} (fitted electrodes) values", montage.len(), idx.len()),
            format!("{} values", map.len()),
        ))
    }
}

struct Objective<'a> {
    model: &'a ForwardModel,
    positions: &'a [[f64; 3]],
    map: DVector<f64>,
    map_power: f64,
    bound: f64,
}

impl Objective<'_> {
    /// Best moment at `p` and the resulting residual variance.
    fn solve(&self, p: &[f64; 3]) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let l = self.model.leadfield(p, self.positions)?;
        let q = l
            .clone()
            .svd(true, true)
            .solve(&self.map, 1e-12)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let fitted = &l * &q;
        let rv = (&self.map - &fitted).norm_squared() / self.map_power;
        Ok((q, fitted, rv))
    }

    fn rv(&self, p: &[f64; 3]) -> f64 {
        if !(norm(p) < self.bound) {
            return f64::INFINITY;
        }
        self.solve(p).map(|(_, _, rv)| rv).unwrap_or(f64::INFINITY)
    }
}

/// Fits one current dipole to a scalp map.
///
/// An 8 mm grid over the search sphere picks the start; Nelder–Mead then refines the
/// position while the moment is solved by linear least squares at every step.
/// `map` holds values for all montage electrodes or for the fitted ones only.
pub fn fit_dipole(map: &[f64], montage: &Montage, head: &HeadModel, options: &FitOptions) -> Result<DipoleFit> {
    options.validate()?;
    montage.validate(head)?;
    let model = ForwardModel::new(head, options.max_degree)?;
    fit_with(&model, map, montage, options)
}

fn fit_with(model: &ForwardModel, map: &[f64], montage: &Montage, options: &FitOptions) -> Result<DipoleFit> {
    let head = model.head();
    let mut values = fitted_values(map, montage)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("scalp map has non-finite values".into()));
    }
    average_reference(&mut values);
    let map = DVector::from_vec(values);
    let map_power = map.norm_squared();
    if !(map_power > 0.0) {
        return Err(Error::Domain("residual variance is undefined for a flat scalp map".into()));
    }
    let positions = montage.fit_positions(head);
    let bound = options.search_fraction * head.inner_radius();
    let objective = Objective {
        model,
        positions: &positions,
        map,
        map_power,
        bound,
    };

    let s = options.grid_spacing_mm;
    let steps = (bound / s).floor() as i64;
    let grid: Vec<[f64; 3]> = (-steps..=steps)
        .flat_map(|i| (-steps..=steps).flat_map(move |j| (-steps..=steps).map(move |k| [i as f64 * s, j as f64 * s, k as f64 * s])))
        .filter(|p| norm(p) < bound)
        .collect();
    let start = grid
        .par_iter()
        .map(|p| (objective.rv(p), *p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Validation("search region holds no grid points".into()))?
        .1;

    let (best, iterations) = nelder_mead(
        |p| objective.rv(p),
        start,
        0.5 * s,
        options.position_tolerance_mm,
        options.max_iterations,
    );
    let (q, fitted, rv) = objective.solve(&best)?;
    Ok(DipoleFit {
        dipole: Dipole {
            position: best,
            moment: [q[0], q[1], q[2]],
        },
        rv,
        projected_map: fitted.as_slice().to_vec(),
        fit_iterations: iterations,
        at_boundary: norm(&best) > bound - 1.0,
    })
}

/// Downhill simplex in three dimensions. Returns the best vertex and the iteration count.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(f: F, start: [f64; 3], step: f64, xtol: f64, max_iter: usize) -> ([f64; 3], usize) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|k| {
            let mut p = start;
            if k > 0 {
                p[k - 1] += step;
            }
            (p, f(&p))
        })
        .collect();
    let along = |from: &[f64; 3], to: &[f64; 3], t: f64| -> [f64; 3] {
        [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1]), from[2] + t * (to[2] - from[2])]
    };
    let mut iterations = 0;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0;
        let spread = simplex[1..]
            .iter()
            .map(|(p, _)| norm(&[p[0] - best[0], p[1] - best[1], p[2] - best[2]]))
            .fold(0.0f64, f64::max);
        if spread < xtol {
            break;
        }
        iterations += 1;
        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += p[k] / 3.0;
            }
        }
        let (worst, f_worst) = simplex[3];
        let reflected = along(&centroid, &worst, -1.0);
        let f_r = f(&reflected);
        if f_r < simplex[0].1 {
            let expanded = along(&centroid, &worst, -2.0);
            let f_e = f(&expanded);
            simplex[3] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < simplex[2].1 {
            simplex[3] = (reflected, f_r);
        } else {
            let contracted = if f_r < f_worst {
                along(&centroid, &reflected, 0.5)
            } else {
                along(&centroid, &worst, 0.5)
            };
            let f_c = f(&contracted);
            if f_c < f_worst.min(f_r) {
                simplex[3] = (contracted, f_c);
            } else {
                for v in simplex.iter_mut().skip(1) {
                    v.0 = along(&best, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, iterations)
}

/// Fits a dipole to every column of the mixing matrix `a` and summarizes the
/// share of near-dipolar components at each residual-variance threshold.
///
/// `a` has one row per montage electrode (excluded rows are dropped) or one per
/// fitted electrode. A failed fit is recorded for that component and counted as
/// non-dipolar.
pub fn dipolarity(
    a: &DMatrix<f64>,
    montage: &Montage,
    head: &HeadModel,
    options: &FitOptions,
    thresholds: &[f64],
) -> Result<DipolarityReport> {
    options.validate()?;
    montage.validate(head)?;
    if a.nrows() != montage.len() && a.nrows() != montage.fit_indices().len() {
        return Err(Error::shape(
            format!("{} or {} mixing rows", montage.len(), montage.fit_indices().len()),
            format!("{} rows", a.nrows()),
        ));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Validation(format!("rv thresholds must be in (0, 1], got {t}")));
    }
    let model = ForwardModel::new(head, options.max_degree)?;
    let results: Vec<Result<DipoleFit>> = (0..a.ncols())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = a.column(j).iter().copied().collect();
            fit_with(&model, &col, montage, options)
        })
        .collect();
    let mut fits = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (component, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => fits.push(Some(f)),
            Err(e) => {
                failures.push(ComponentFailure {
                    component,
                    message: e.to_string(),
                });
                fits.push(None);
            }
        }
    }
    let rv: Vec<Option<f64>> = fits.iter().map(|f| f.as_ref().map(|f| f.rv)).collect();
    Ok(DipolarityReport {
        nd_percent: thresholds.iter().map(|&t| nd_percent(&rv, t)).collect(),
        thresholds: thresholds.to_vec(),
        fits,
        failures,
    })
}
