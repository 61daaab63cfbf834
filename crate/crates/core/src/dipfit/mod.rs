//! Equivalent-dipole modelling of component maps in a four-shell spherical head.
//!
//! Coordinates are millimetres with the origin at the sphere centre, `+x` towards
//! the nose, `+y` towards the left ear and `+z` up.

mod fit;
mod forward;

pub use fit::{default_thresholds, dipolarity, fit_dipole, ComponentFailure, DipolarityReport, DipoleFit, FitOptions};
pub use forward::{forward_potential, ForwardModel, DEFAULT_MAX_DEGREE};

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest non-excluded electrodes a dipole fit accepts.
pub const MIN_FIT_ELECTRODES: usize = 6;

/// Concentric shells, innermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    #[serde(rename = "radii_mm")]
    pub radii: [f64; 4],
    /// Relative conductivities; only their ratios affect the scalp pattern.
    pub conductivities: [f64; 4],
}

impl Default for HeadModel {
    fn default() -> Self {
        HeadModel {
            radii: [71.0, 72.0, 79.0, 85.0],
            conductivities: [0.33, 0.0042, 1.0, 0.33],
        }
    }
}

impl HeadModel {
    pub fn new(radii: [f64; 4], conductivities: [f64; 4]) -> Result<Self> {
        let h = HeadModel {
            radii,
            conductivities,
        };
        h.validate()?;
        Ok(h)
    }

    /// Four shells with one conductivity, electrically a single sphere.
    pub fn homogeneous(radii: [f64; 4], conductivity: f64) -> Result<Self> {
        Self::new(radii, [conductivity; 4])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radii[0] > 0.0) || self.radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!(
                "shell radii must be positive and strictly ascending, got {:?}",
                self.radii
            )));
        }
        if self.conductivities.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Validation(format!(
                "conductivities must be positive, got {:?}",
                self.conductivities
            )));
        }
        Ok(())
    }

    pub fn inner_radius(&self) -> f64 {
        self.radii[0]
    }

    pub fn outer_radius(&self) -> f64 {
        self.radii[3]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let h: HeadModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub label: String,
    /// Position in mm.
    pub position: [f64; 3],
}

/// Electrode positions plus the labels left out of dipole fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Montage {
    pub electrodes: Vec<Electrode>,
    #[serde(default)]
    pub exclude: BTreeSet<String>,
}

/// Approximate eye directions (unit vectors) used to pick excluded electrodes.
const EYES: [[f64; 3]; 2] = [[0.80, 0.38, -0.46], [0.80, -0.38, -0.46]];

impl Default for Montage {
    /// 71 electrodes on the default scalp, the two nearest the eyes excluded.
    fn default() -> Self {
        Montage::spherical_cap(71, HeadModel::default().outer_radius(), 2)
    }
}

impl Montage {
    pub fn new(electrodes: Vec<Electrode>, exclude: BTreeSet<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &electrodes {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::Validation(format!("duplicate electrode label {:?}", e.label)));
            }
            if e.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("electrode {:?} has a non-finite position", e.label)));
            }
        }
        if let Some(missing) = exclude.iter().find(|l| !seen.contains(l.as_str())) {
            return Err(Error::Validation(format!("excluded label {missing:?} is not in the montage")));
        }
        Ok(Montage { electrodes, exclude })
    }

    /// `count` electrodes spread evenly (Fibonacci lattice) over the upper part of a
    /// sphere of `radius`, down to 20° below the equator. The `exclude_count`
    /// electrodes nearest the eyes, alternating left and right, are excluded.
    pub fn spherical_cap(count: usize, radius: f64, exclude_count: usize) -> Self {
        let z_min = -(20f64.to_radians().sin());
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let labels = crate::signals::default_labels("E", count);
        let electrodes: Vec<Electrode> = (0..count)
            .map(|i| {
                let z = 1.0 - (1.0 - z_min) * (i as f64 + 0.5) / count as f64;
                let rxy = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Electrode {
                    label: labels[i].clone(),
                    position: [radius * rxy * phi.cos(), radius * rxy * phi.sin(), radius * z],
                }
            })
            .collect();
        let mut exclude = BTreeSet::new();
        for k in 0..exclude_count.min(count) {
            let eye = EYES[k % 2];
            let nearest = electrodes
                .iter()
                .filter(|e| !exclude.contains(&e.label))
                .min_by(|a, b| {
                    distance_to_direction(&a.position, &eye).total_cmp(&distance_to_direction(&b.position, &eye))
                })
                .expect("candidates remain");
            exclude.insert(nearest.label.clone());
        }
        Montage { electrodes, exclude }
    }

    /// Reads `label,x,y,z` rows (mm); a first row that does not parse is taken as a header.
    pub fn from_csv(path: &Path, exclude: BTreeSet<String>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut electrodes = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let coords: Option<Vec<f64>> = cells.get(1..4).map(|c| c.iter().map(|v| v.parse().ok()).collect()).flatten();
            match (cells.len(), coords) {
                (4, Some(c)) => electrodes.push(Electrode {
                    label: cells[0].to_string(),
                    position: [c[0], c[1], c[2]],
                }),
                _ if idx == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        location: format!("line {}", idx + 1),
                        message: "expected label,x_mm,y_mm,z_mm".into(),
                    })
                }
            }
        }
        Montage::new(electrodes, exclude)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("label,x_mm,y_mm,z_mm\n");
        for e in &self.electrodes {
            out.push_str(&format!("{},{},{},{}\n", e.label, e.position[0], e.position[1], e.position[2]));
        }
        crate::signals::write_atomic(path, out.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    /// Indices of electrodes used for fitting, in montage order.
    pub fn fit_indices(&self) -> Vec<usize> {
        (0..self.electrodes.len())
            .filter(|&i| !self.exclude.contains(&self.electrodes[i].label))
            .collect()
    }

    /// Checks electrode count and that every electrode lies within 5% of the scalp.
    pub fn validate(&self, head: &HeadModel) -> Result<()> {
        let used = self.fit_indices().len();
        if used < MIN_FIT_ELECTRODES {
            return Err(Error::Validation(format!(
                "montage needs at least {MIN_FIT_ELECTRODES} fitted electrodes, has {used}"
            )));
        }
        let r = head.outer_radius();
        for e in &self.electrodes {
            let d = norm(&e.position);
            if (d - r).abs() > 0.05 * r {
                return Err(Error::Validation(format!(
                    "electrode {:?} is {d:.1} mm from the centre, more than 5% off the {r} mm scalp",
                    e.label
                )));
            }
        }
        Ok(())
    }

    /// All electrode positions projected radially onto the outer shell.
    pub fn scalp_positions(&self, head: &HeadModel) -> Vec<[f64; 3]> {
        let r = head.outer_radius();
        self.electrodes
            .iter()
            .map(|e| {
                let d = norm(&e.position);
                [e.position[0] * r / d, e.position[1] * r / d, e.position[2] * r / d]
            })
            .collect()
    }

    /// Projected positions of the fitted electrodes only.
    pub fn fit_positions(&self, head: &HeadModel) -> Vec<[f64; 3]> {
        let all = self.scalp_positions(head);
        self.fit_indices().into_iter().map(|i| all[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    /// Position in mm.
    pub position: [f64; 3],
    pub moment: [f64; 3],
}

pub(crate) fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn distance_to_direction(p: &[f64; 3], dir: &[f64; 3]) -> f64 {
    let r = norm(p);
    let d = norm(dir);
    let u = [p[0] / r - dir[0] / d, p[1] / r - dir[1] / d, p[2] / r - dir[2] / d];
    norm(&u)
}

/// Subtracts the mean.
pub(crate) fn average_reference(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}
