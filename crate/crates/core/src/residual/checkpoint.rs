/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! JSON checkpoint container and CSV loss history.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, ResidualNetwork};
use crate::backbone::{Integrator, SegmentParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tdcr-residual";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub integrator: Integrator,
    pub segment: SegmentParams,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(network: &ResidualNetwork, integrator: Integrator, segment: SegmentParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: network.architecture().clone(),
            integrator,
            segment,
            params: network.params().to_vec(),
        }
    }

    pub fn network(&self) -> Result<ResidualNetwork> {
        ResidualNetwork::from_parts(self.architecture.clone(), self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.network()?;
        Ok(ck)
    }
}

pub fn write_loss_history(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "loss"])?;
    for (i, l) in history.iter().enumerate() {
        w.write_record([i.to_string(), format!("{l:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_history(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let (_, loss): (usize, f64) = rec?;
        out.push(loss);
    }
    Ok(out)
}
