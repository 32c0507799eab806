use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::assemble_form;
use crate::error::{Error, Result};
use crate::mesh::build_refined;
use crate::schwarz::{Decomposition, SchwarzOptions, SchwarzPreconditioner};
use crate::spaces::{build_embedding, build_space, DofSpace, EmbeddingMatrix, SpaceKind};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Curl,
    Div,
}

impl Form {
    pub fn space_kind(self) -> SpaceKind {
        match self {
            Form::Curl => SpaceKind::Nd0,
            Form::Div => SpaceKind::Rt0,
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Curl => "curl",
            Form::Div => "div",
        })
    }
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curl" => Ok(Form::Curl),
            "div" => Ok(Form::Div),
            other => Err(Error::Parse(format!("unknown form {other:?}"))),
        }
    }
}

/// Fine and coarse discretizations of one model problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub form: Form,
    pub fine: DofSpace,
    pub coarse: DofSpace,
    pub a_fine: SparseSymMatrix,
    pub a_coarse: SparseSymMatrix,
    pub embedding: EmbeddingMatrix,
}

impl Problem {
    pub fn build(form: Form, n_coarse: usize, refine: u32) -> Result<Self> {
        let kind = form.space_kind();
        let coarse = build_space(Arc::new(build_refined(n_coarse, 0)?), kind);
        let fine = build_space(Arc::new(build_refined(n_coarse, refine)?), kind);
        let a_fine = assemble_form(&fine)?;
        let a_coarse = assemble_form(&coarse)?;
        let embedding = build_embedding(&coarse, &fine)?;
        Ok(Self { form, fine, coarse, a_fine, a_coarse, embedding })
    }

    pub fn n_free(&self) -> usize {
        self.fine.n_free()
    }

    pub fn decomposition(&self, overlap_layers: usize) -> Result<Decomposition> {
        Decomposition::build(self.fine.mesh.clone(), overlap_layers)
    }

    pub fn preconditioner(&self, dec: &Decomposition, options: SchwarzOptions) -> Result<SchwarzPreconditioner> {
        SchwarzPreconditioner::build(&self.a_fine, Some((&self.a_coarse, &self.embedding)), dec, options)
    }
}
