//! Linear decompositions `y = W x` of multichannel data.
//!
//! Every algorithm works on mean-removed data and returns a [`Decomposition`]
//! holding the unmixing matrix `W` and the mixing matrix `A = W⁻¹`, whose columns
//! are the component maps. Fitted decompositions are put in a canonical form: each
//! column of `A` has its largest-magnitude entry positive, and components are
//! ordered by descending back-projected variance.

mod amuse;
mod density;
mod fastica;
mod infomax;
mod pca;
mod picard;

pub use amuse::{amuse, AmuseParams};
pub use density::{negative_log_likelihood, relative_gradient, DensityModel};
pub use fastica::{fastica, FastIcaParams};
pub use infomax::{infomax, InfomaxParams};
pub use pca::{pca, sphere};
pub use picard::{picard, picard_o, PicardParams};

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::{read_matrix_binary, read_matrix_csv, write_matrix_csv, Dataset};

/// Maximum allowed `max |W A - I|` for a returned decomposition.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective value after each accepted iteration, where the algorithm has one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
    /// Iterations at which the density model changed (the loss is only
    /// comparable between consecutive resets).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density_resets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gradient_max_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonality_residual_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    #[serde(with = "crate::rows")]
    pub w: DMatrix<f64>,
    #[serde(with = "crate::rows")]
    pub a: DMatrix<f64>,
    pub algorithm_id: String,
    /// SHA-256 of the canonical JSON of the parameters.
    pub params_digest: String,
    pub iterations_used: usize,
    pub converged: bool,
    pub wall_time_sec: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl Decomposition {
    /// Wraps `w`, deriving `A` and checking `W A = I`.
    pub fn from_unmixing<P: Serialize>(
        w: DMatrix<f64>,
        algorithm_id: impl Into<String>,
        params: &P,
    ) -> Result<Self> {
        if let Some(pos) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "unmixing matrix has a non-finite entry at row {}",
                pos % w.nrows()
            )));
        }
        if let Some(i) = (0..w.nrows()).find(|&i| w.row(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::Singular(format!("row {i} of the unmixing matrix is zero")));
        }
        let a = mixing_from_unmixing(&w)?;
        let residual = linalg::max_abs_minus_identity(&(&w * &a));
        if residual > INVERSE_TOLERANCE {
            return Err(Error::Singular(format!(
                "unmixing matrix is too ill-conditioned: max |WA - I| = {residual:e}"
            )));
        }
        Ok(Decomposition {
            w,
            a,
            algorithm_id: algorithm_id.into(),
            params_digest: params_digest(params),
            iterations_used: 0,
            converged: true,
            wall_time_sec: 0.0,
            warnings: Vec::new(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.w.nrows()
    }

    /// Component activations `W x` of the mean-removed data.
    pub fn activations(&self, ds: &Dataset) -> DMatrix<f64> {
        linalg::apply_unmixing(&self.w, &ds.centered())
    }

    /// Writes `W` as a headerless CSV, exactly re-readable by [`import_decomposition`].
    pub fn export_unmixing(&self, path: &Path) -> Result<()> {
        write_matrix_csv(&self.w, path)
    }

    /// Flips signs and reorders components into canonical form, given the data covariance.
    pub(crate) fn canonicalize(&mut self, cov: &DMatrix<f64>) -> Result<()> {
        let k = self.w.nrows();
        let variance: Vec<f64> = (0..k)
            .map(|i| {
                let wi = self.w.row(i);
                let var_y = (wi * cov * wi.transpose())[(0, 0)];
                var_y * self.a.column(i).norm_squared()
            })
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| variance[q].total_cmp(&variance[p]));
        let mut w = DMatrix::zeros(k, self.w.ncols());
        for (dst, &src) in order.iter().enumerate() {
            let col = self.a.column(src);
            let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            w.set_row(dst, &(self.w.row(src) * sign));
        }
        self.a = mixing_from_unmixing(&w)?;
        self.w = w;
        Ok(())
    }
}

/// `W⁻¹` for square `W`, otherwise the right pseudo-inverse `Wᵀ (W Wᵀ)⁻¹`.
fn mixing_from_unmixing(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.is_square() {
        linalg::invert(w)
    } else if w.nrows() < w.ncols() {
        let gram = w * w.transpose();
        Ok(w.transpose() * linalg::invert(&gram)?)
    } else {
        Err(Error::shape(
            format!("at most {} rows", w.ncols()),
            format!("{} rows", w.nrows()),
        ))
    }
}

pub fn params_digest<P: Serialize>(params: &P) -> String {
    let json = serde_json::to_string(params).unwrap_or_default();
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Mean-removed data, its covariance and the symmetric sphering matrix.
pub(crate) struct Prepared {
    pub centered: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub sphere: DMatrix<f64>,
}

impl Prepared {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let centered = ds.centered();
        let cov = linalg::covariance(&centered);
        let sphere = linalg::inverse_sqrt_spd(&cov)?;
        Ok(Prepared {
            centered,
            cov,
            sphere,
        })
    }

    pub fn sphered(&self) -> DMatrix<f64> {
        &self.sphere * &self.centered
    }

    /// Builds the canonical decomposition for `w_z` fitted on sphered data.
    pub fn finish<P: Serialize>(
        &self,
        w_z: &DMatrix<f64>,
        algorithm_id: &str,
        params: &P,
        started: Instant,
    ) -> Result<Decomposition> {
        let w = w_z * &self.sphere;
        let mut dec = Decomposition::from_unmixing(w, algorithm_id, params)?;
        dec.canonicalize(&self.cov)?;
        dec.wall_time_sec = started.elapsed().as_secs_f64();
        Ok(dec)
    }
}

/// Wraps an externally computed `n x n` unmixing matrix for `ds`.
///
/// `.csv` files are read as headerless CSV; anything else as a raw little-endian
/// `f64` payload of `n x n` values, row-major.
pub fn import_decomposition(path: &Path, ds: &Dataset) -> Result<Decomposition> {
    let n = ds.n_channels();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let w = if is_csv {
        read_matrix_csv(path)?
    } else {
        read_matrix_binary(path, n)?
    };
    if w.shape() != (n, n) {
        return Err(Error::shape(
            format!("{n}x{n} unmixing matrix for {n} channels"),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    let id = path
        .file_stem()
        .map(|s| format!("import:{}", s.to_string_lossy()))
        .unwrap_or_else(|| "import".into());
    Decomposition::from_unmixing(w, id, &path.display().to_string())
}

/// Amari performance index of `P = W A_true`, in `[0, 1]`.
///
/// `(Σ_i (Σ_j |p_ij| / max_j |p_ij| - 1) + Σ_j (Σ_i |p_ij| / max_i |p_ij| - 1)) / (2n(n-1))`;
/// zero exactly when `P` is a scaled permutation.
pub fn amari_index(w: &DMatrix<f64>, a_true: &DMatrix<f64>) -> Result<f64> {
    if !w.is_square() || w.shape() != a_true.shape() {
        return Err(Error::shape(
            format!("two n x n matrices, first is {}x{}", w.nrows(), w.ncols()),
            format!("{}x{}", a_true.nrows(), a_true.ncols()),
        ));
    }
    let n = w.nrows();
    if n < 2 {
        return Err(Error::Validation("Amari index needs n >= 2".into()));
    }
    linalg::log2_abs_det(a_true)?;
    let p = (w * a_true).abs();
    let mut total = 0.0;
    for i in 0..n {
        let row = p.row(i);
        let max = row.max();
        if max == 0.0 {
            return Err(Error::Singular(format!("row {i} of W A is zero")));
        }
        total += row.sum() / max - 1.0;
    }
    for j in 0..n {
        let col = p.column(j);
        let max = col.max();
        if max == 0.0 {
            return Err(Error::Singular(format!("column {j} of W A is zero")));
        }
        total += col.sum() / max - 1.0;
    }
    Ok(total / (2 * n * (n - 1)) as f64)
}

/// A configured decomposition method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Algorithm {
    /// The identity unmixing matrix (channels as components).
    Identity,
    Sphere,
    Pca {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
    Infomax(InfomaxParams),
    ExtendedInfomax(InfomaxParams),
    Fastica(FastIcaParams),
    Picard(PicardParams),
    PicardO(PicardParams),
    Amuse(AmuseParams),
    /// Unmixing matrix computed elsewhere; `{dataset}` in the path is replaced by the dataset id.
    Import { path: String },
}

impl Algorithm {
    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        match self {
            Algorithm::Identity => "identity",
            Algorithm::Sphere => "sphere",
            Algorithm::Pca { .. } => "pca",
            Algorithm::Infomax(_) => "infomax",
            Algorithm::ExtendedInfomax(_) => "extended-infomax",
            Algorithm::Fastica(_) => "fastica",
            Algorithm::Picard(p) if p.extended => "picard-extended",
            Algorithm::Picard(_) => "picard",
            Algorithm::PicardO(p) if p.extended => "picard-o-extended",
            Algorithm::PicardO(_) => "picard-o",
            Algorithm::Amuse(_) => "amuse",
            Algorithm::Import { .. } => "import",
        }
        .to_string()
    }

    /// The stopping tolerance, for algorithms that have one.
    pub fn tolerance(&self) -> Option<f64> {
        match self {
            Algorithm::Infomax(p) | Algorithm::ExtendedInfomax(p) => Some(p.weight_change_stop),
            Algorithm::Fastica(p) => Some(p.tol),
            Algorithm::Picard(p) | Algorithm::PicardO(p) => Some(p.tol),
            _ => None,
        }
    }

    /// Copy of this algorithm with its stopping tolerance replaced.
    pub fn with_tolerance(&self, tol: f64) -> Self {
        let mut a = self.clone();
        match &mut a {
            Algorithm::Infomax(p) | Algorithm::ExtendedInfomax(p) => p.weight_change_stop = tol,
            Algorithm::Fastica(p) => p.tol = tol,
            Algorithm::Picard(p) | Algorithm::PicardO(p) => p.tol = tol,
            _ => {}
        }
        a
    }

    /// Copy of this algorithm with its random seed replaced, for seeded algorithms.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut a = self.clone();
        match &mut a {
            Algorithm::Infomax(p) | Algorithm::ExtendedInfomax(p) => p.seed = seed,
            Algorithm::Fastica(p) => p.seed = seed,
            Algorithm::Picard(p) | Algorithm::PicardO(p) => p.seed = Some(seed),
            _ => {}
        }
        a
    }

    pub fn run(&self, ds: &Dataset) -> Result<Decomposition> {
        match self {
            Algorithm::Identity => {
                let started = Instant::now();
                let n = ds.n_channels();
                let mut d = Decomposition::from_unmixing(DMatrix::identity(n, n), "identity", &())?;
                d.wall_time_sec = started.elapsed().as_secs_f64();
                Ok(d)
            }
            Algorithm::Sphere => {
                let started = Instant::now();
                let s = sphere(ds)?;
                let mut d = Decomposition::from_unmixing(s, "sphere", &())?;
                d.wall_time_sec = started.elapsed().as_secs_f64();
                Ok(d)
            }
            Algorithm::Pca { k } => pca(ds, *k),
            Algorithm::Infomax(p) => infomax(ds, p, false),
            Algorithm::ExtendedInfomax(p) => infomax(ds, p, true),
            Algorithm::Fastica(p) => fastica(ds, p),
            Algorithm::Picard(p) => picard(ds, p),
            Algorithm::PicardO(p) => picard_o(ds, p),
            Algorithm::Amuse(p) => amuse(ds, p),
            Algorithm::Import { path } => {
                let started = Instant::now();
                let path = path.replace("{dataset}", ds.id());
                let mut d = import_decomposition(Path::new(&path), ds)?;
                d.wall_time_sec = started.elapsed().as_secs_f64();
                Ok(d)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{synth_dataset, Mixing, SourceKind, SynthSpec};

    #[test]
    fn amari_of_scaled_permutation_is_zero() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0]);
        let inv = linalg::invert(&a).unwrap();
        assert!(amari_index(&inv, &a).unwrap() < 1e-12);
        let pd = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, -3.0, 0.5, 0.0, 0.0]);
        assert_eq!(amari_index(&(pd * inv), &a).unwrap(), 0.0);
    }

    #[test]
    fn amari_of_all_ones_is_one() {
        // rows and columns each contribute (2 / 1 - 1) = 1; four terms over 2n(n-1) = 4
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(amari_index(&ones, &DMatrix::identity(2, 2)).unwrap(), 1.0);
    }

    #[test]
    fn amari_rejects_singular_reference() {
        let w = DMatrix::identity(2, 2);
        assert!(amari_index(&w, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn import_round_trip_and_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(3, 500, SourceKind::Laplacian, 1).with_mixing(Mixing::RandomGeneral);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let w = DMatrix::from_row_slice(3, 3, &[0.1, 0.7, 1.0 / 3.0, 2.0, -1e-17, 0.0, 0.5, 0.25, 9.0]);
        let path = dir.path().join("w.csv");
        write_matrix_csv(&w, &path).unwrap();
        let d = import_decomposition(&path, &ds).unwrap();
        assert_eq!(d.w, w);
        let again = dir.path().join("again.csv");
        d.export_unmixing(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

        write_matrix_csv(&DMatrix::identity(2, 2), &path).unwrap();
        let err = import_decomposition(&path, &ds).unwrap_err();
        assert!(err.to_string().contains("3x3"), "{err}");
    }

    #[test]
    fn import_binary() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(2, 100, SourceKind::Uniform, 2);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let path = dir.path().join("w.bin");
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        crate::signals::write_matrix_binary(&w, &path).unwrap();
        assert_eq!(import_decomposition(&path, &ds).unwrap().w, w);
    }

    #[test]
    fn singular_unmixing_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Decomposition::from_unmixing(w, "x", &()).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        assert!(Decomposition::from_unmixing(w, "x", &()).is_err());
    }

    #[test]
    fn canonical_form() {
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 9.0]));
        let w = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let mut d = Decomposition::from_unmixing(w, "x", &()).unwrap();
        d.canonicalize(&cov).unwrap();
        assert_eq!(d.w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn algorithm_json_is_tagged() {
        let a: Algorithm = serde_json::from_str(r#"{"algorithm": "picard-o", "tol": 1e-4}"#).unwrap();
        match &a {
            Algorithm::PicardO(p) => assert_eq!(p.tol, 1e-4),
            other => panic!("{other:?}"),
        }
        assert_eq!(a.id(), "picard-o");
        let b: Algorithm = serde_json::from_str(r#"{"algorithm": "pca"}"#).unwrap();
        assert_eq!(b, Algorithm::Pca { k: None });
        let back: Algorithm = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn digest_is_stable() {
        let d1 = params_digest(&PicardParams::default());
        let d2 = params_digest(&PicardParams::default());
        assert_eq!(d1, d2);
        assert_eq!(d1.len(), 64);
        assert_ne!(d1, params_digest(&PicardParams { tol: 1.0, ..Default::default() }));
    }
}
