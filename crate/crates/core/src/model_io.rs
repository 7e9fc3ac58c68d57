//! JSON persistence for fitted binary PCLDA rules.
//!
//! The document stores the spiked whitener, the raw class means and the
//! selection; whitened quantities are recomputed on load with the same
//! arithmetic as the fit, so a reloaded model predicts bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classify::pclda::{BinaryDirection, PcldaModel, Selection};
use crate::error::{Error, Result};
use crate::whitening::{SpikedCovModel, WhiteningOperator};

pub const MODEL_FORMAT: &str = "spikelda-pclda";
pub const MODEL_VERSION: u32 = 1;

/// A dense matrix stored column-major with its row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMajor {
    pub nrows: usize,
    pub data: Vec<f64>,
}

impl ColumnMajor {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        ColumnMajor {
            nrows: m.nrows(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.nrows == 0 || !self.data.len().is_multiple_of(self.nrows) {
            return Err(Error::Schema(format!(
                "matrix data of length {} does not split into rows of {}",
                self.data.len(),
                self.nrows
            )));
        }
        let ncols = self.data.len() / self.nrows;
        Ok(DMatrix::from_column_slice(self.nrows, ncols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub d: usize,
    pub lambda_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub u_hat: ColumnMajor,
    pub classes: [String; 2],
    pub class_means: [Vec<f64>; 2],
    pub counts: [usize; 2],
    /// Zero-based feature indices.
    pub selected: Vec<usize>,
    pub selection: Selection,
    /// `t_n`, present when the model was fit by thresholding.
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl ModelDocument {
    pub fn from_model(model: &PcldaModel, feature_names: Option<&[String]>) -> Self {
        let spiked = model.whitener().model();
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            p: spiked.p(),
            d: spiked.d(),
            lambda_hat: spiked.lambda_hat().as_slice().to_vec(),
            sigma2_hat: spiked.sigma2_hat(),
            u_hat: ColumnMajor::from_matrix(spiked.u_hat()),
            classes: model.classes().clone(),
            class_means: [
                model.class_means()[0].as_slice().to_vec(),
                model.class_means()[1].as_slice().to_vec(),
            ],
            counts: model.counts(),
            selected: model.selected().to_vec(),
            selection: model.selection(),
            threshold: model.threshold(),
            feature_names: feature_names.map(<[String]>::to_vec),
        }
    }

    pub fn to_model(&self) -> Result<PcldaModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Schema(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        let u = self.u_hat.to_matrix()?;
        if u.nrows() != self.p || u.ncols() != self.d || self.lambda_hat.len() != self.d {
            return Err(Error::Schema(format!(
                "U_hat is {}x{} with {} spikes, expected {}x{}",
                u.nrows(),
                u.ncols(),
                self.lambda_hat.len(),
                self.p,
                self.d
            )));
        }
        if self.class_means.iter().any(|m| m.len() != self.p) {
            return Err(Error::Schema("class means do not have p entries".into()));
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.p {
                return Err(Error::Schema(format!(
                    "{} feature names for p = {}",
                    names.len(),
                    self.p
                )));
            }
        }
        if self.selected.is_empty()
            || self.selected.iter().any(|&j| j >= self.p)
            || self.selected.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Schema(
                "selected indices must be sorted, distinct and below p".into(),
            ));
        }
        let spiked =
            SpikedCovModel::from_parts(u, DVector::from_vec(self.lambda_hat.clone()), self.sigma2_hat)?;
        let means = [
            DVector::from_vec(self.class_means[0].clone()),
            DVector::from_vec(self.class_means[1].clone()),
        ];
        let dir = BinaryDirection::from_means(WhiteningOperator::new(spiked), means, self.counts)?;
        Ok(PcldaModel {
            whitener: dir.whitener,
            classes: self.classes.clone(),
            counts: self.counts,
            class_means: dir.class_means,
            zeta_hat: dir.zeta_hat,
            selected: self.selected.clone(),
            midpoint: dir.midpoint,
            prior_offset: dir.prior_offset,
            selection: self.selection,
            threshold: self.threshold,
        })
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
