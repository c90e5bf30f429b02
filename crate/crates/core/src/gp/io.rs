//! Key-value serialization of trained models (17 significant digits).

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::dataset::Dataset;
use super::exact::GpModel;
use super::kernel::KernelHyper;
use super::sparse::SparseGpModel;
use crate::error::{PlatoonError, Result};
use crate::kv::KvFile;
use crate::numfmt::MODEL_DIGITS;

fn put_hyper(kv: &mut KvFile, h: &KernelHyper) {
    kv.set("dim", h.dim().to_string());
    kv.set_f64_digits("signal_variance", h.signal_variance, MODEL_DIGITS);
    kv.set_f64_list("length_scales", &h.length_scales, MODEL_DIGITS);
    kv.set_f64_digits("noise_variance", h.noise_variance, MODEL_DIGITS);
}

fn get_hyper(kv: &KvFile) -> Result<KernelHyper> {
    let dim: usize = kv.parse_value("dim")?;
    let h = KernelHyper::new(kv.parse_value("signal_variance")?, kv.f64_list("length_scales")?, kv.parse_value("noise_variance")?)?;
    if h.dim() != dim {
        return Err(PlatoonError::DimensionMismatch { expected: dim, got: h.dim() });
    }
    Ok(h)
}

fn put_matrix(kv: &mut KvFile, key: &str, m: &DMatrix<f64>) {
    let row_major: Vec<f64> = m.transpose().iter().copied().collect();
    kv.set_f64_list(key, &row_major, MODEL_DIGITS);
}

fn get_matrix(kv: &KvFile, key: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let xs = kv.f64_list(key)?;
    if xs.len() != rows * cols {
        return Err(PlatoonError::Format(format!("`{key}` holds {} values, expected {}", xs.len(), rows * cols)));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &xs))
}

fn expect_kind(kv: &KvFile, kind: &str) -> Result<()> {
    let found = kv.require("model")?;
    if found != kind {
        return Err(PlatoonError::Format(format!("expected a `{kind}` model, found `{found}`")));
    }
    Ok(())
}

pub fn sparse_to_kv(sm: &SparseGpModel) -> KvFile {
    let mut kv = KvFile::new();
    kv.set("model", "sparse_fic");
    put_hyper(&mut kv, &sm.hyper);
    kv.set("inducing_count", sm.n_inducing().to_string());
    put_matrix(&mut kv, "inducing_inputs", &sm.inducing_inputs);
    put_matrix(&mut kv, "chol_inducing", &sm.lm);
    put_matrix(&mut kv, "chol_inner", &sm.lb);
    kv.set_f64_list("weights", sm.weights.as_slice(), MODEL_DIGITS);
    kv
}

pub fn sparse_from_kv(kv: &KvFile) -> Result<SparseGpModel> {
    expect_kind(kv, "sparse_fic")?;
    let hyper = get_hyper(kv)?;
    let m: usize = kv.parse_value("inducing_count")?;
    let weights = DVector::from_vec(kv.f64_list("weights")?);
    if weights.len() != m {
        return Err(PlatoonError::Format(format!("`weights` holds {} values, expected {m}", weights.len())));
    }
    Ok(SparseGpModel {
        inducing_inputs: get_matrix(kv, "inducing_inputs", m, hyper.dim())?,
        lm: get_matrix(kv, "chol_inducing", m, m)?,
        lb: get_matrix(kv, "chol_inner", m, m)?,
        weights,
        hyper,
    })
}

pub fn save_sparse(sm: &SparseGpModel, path: &Path) -> Result<()> {
    sparse_to_kv(sm).save(path)
}

pub fn load_sparse(path: &Path) -> Result<SparseGpModel> {
    sparse_from_kv(&KvFile::load(path)?)
}

/// Exact models store their training data; the factorization is rebuilt on load.
pub fn exact_to_kv(model: &GpModel) -> KvFile {
    let mut kv = KvFile::new();
    kv.set("model", "exact");
    put_hyper(&mut kv, &model.hyper);
    kv.set("count", model.dataset.len().to_string());
    put_matrix(&mut kv, "inputs", &model.dataset.inputs);
    kv.set_f64_list("targets", model.dataset.targets.as_slice(), MODEL_DIGITS);
    kv
}

pub fn exact_from_kv(kv: &KvFile) -> Result<GpModel> {
    expect_kind(kv, "exact")?;
    let hyper = get_hyper(kv)?;
    let n: usize = kv.parse_value("count")?;
    let inputs = get_matrix(kv, "inputs", n, hyper.dim())?;
    let targets = DVector::from_vec(kv.f64_list("targets")?);
    GpModel::new(Dataset::new(inputs, targets)?, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::sparse::{build_sparse, SparseOptions};

    fn model() -> GpModel {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.37, (i as f64 * 0.9).sin()]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[0].cos() * 0.3 + r[1] / 7.0).collect();
        GpModel::new(Dataset::from_rows(&rows, &ys).unwrap(), KernelHyper::new(0.8, vec![1.1, 0.4], 0.01).unwrap()).unwrap()
    }

    #[test]
    fn sparse_round_trip_is_bit_exact() {
        let sm = build_sparse(&model(), 4, &SparseOptions::default()).unwrap();
        let text = sparse_to_kv(&sm).to_text();
        let back = sparse_from_kv(&KvFile::parse(&text, "mem").unwrap()).unwrap();
        assert_eq!(back, sm);
        assert_eq!(sparse_to_kv(&back).to_text(), text);
    }

    #[test]
    fn exact_round_trip_predicts_identically() {
        let m = model();
        let back = exact_from_kv(&KvFile::parse(&exact_to_kv(&m).to_text(), "mem").unwrap()).unwrap();
        assert_eq!(back.predict(&[0.3, 0.2]).unwrap(), m.predict(&[0.3, 0.2]).unwrap());
    }

    #[test]
    fn wrong_kind_and_sizes_are_rejected() {
        let m = model();
        let kv = exact_to_kv(&m);
        assert!(sparse_from_kv(&kv).is_err());
        let mut bad = sparse_to_kv(&build_sparse(&m, 3, &SparseOptions::default()).unwrap());
        bad.set("weights", "1,2");
        assert!(sparse_from_kv(&bad).is_err());
    }
}
