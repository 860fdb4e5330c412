use std::fs;
use std::path::{Path, PathBuf};

use halfline::io::{self, BoundaryFile, PotentialFile};
use halfline::{BoundaryPair, Error, PotentialGrid, Result, SpectralOptions};

/// Resolved inputs shared by all subcommands.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub potential: Option<PotentialGrid>,
    pub boundary: Option<BoundaryPair>,
    pub h: Option<f64>,
    pub spectral: SpectralOptions,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

/// Raw flag values.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    pub potential: Option<String>,
    pub boundary: Option<String>,
    pub h: Option<f64>,
    pub x_max: Option<f64>,
    pub kappa_max: Option<f64>,
    pub tol_rank: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

fn read(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {path}: {e}")))
}

fn positive(name: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::Input(format!("--{name} must be positive, got {v}"))),
        _ => Ok(()),
    }
}

fn potential_file(spec: &str) -> Result<(PotentialFile, Option<BoundaryFile>)> {
    if let Some((v, b)) = io::preset(spec) {
        return Ok((v, Some(b)));
    }
    if !Path::new(spec).exists() {
        return Err(Error::Input(format!(
            "{spec:?} is neither a preset ({}) nor an existing file",
            io::PRESET_NAMES.join(", ")
        )));
    }
    Ok((PotentialFile::parse(&read(spec)?)?, None))
}

fn boundary_file(spec: &str) -> Result<BoundaryFile> {
    if let Some((_, b)) = io::preset(spec) {
        return Ok(b);
    }
    if !Path::new(spec).exists() {
        return Err(Error::Input(format!("{spec:?} is neither a preset nor an existing file")));
    }
    BoundaryFile::parse(&read(spec)?)
}

impl RunConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        positive("h", raw.h)?;
        positive("xmax", raw.x_max)?;
        positive("kappa-max", raw.kappa_max)?;
        positive("tol-rank", raw.tol_rank)?;
        let mut preset_boundary = None;
        let potential = match &raw.potential {
            Some(spec) => {
                let (file, bc) = potential_file(spec)?;
                preset_boundary = bc;
                Some(file.with_grid(raw.h, raw.x_max)?.build()?)
            }
            None => None,
        };
        let boundary_spec = match &raw.boundary {
            Some(spec) => Some(boundary_file(spec)?),
            None => preset_boundary,
        };
        let boundary = boundary_spec.map(|b| b.build()).transpose()?;
        if let (Some(v), Some(bc)) = (&potential, &boundary) {
            if v.n() != bc.dim() {
                return Err(Error::Input(format!(
                    "potential has n = {} but boundary matrices are {}x{}",
                    v.n(),
                    bc.dim(),
                    bc.dim()
                )));
            }
        }
        let mut spectral = SpectralOptions { kappa_max: raw.kappa_max, ..SpectralOptions::default() };
        if let Some(t) = raw.tol_rank {
            spectral.tol_rank = t;
        }
        Ok(RunConfig {
            potential,
            boundary,
            h: raw.h,
            spectral,
            out: raw.out,
            seed: raw.seed,
        })
    }

    pub fn potential(&self) -> Result<&PotentialGrid> {
        self.potential.as_ref().ok_or_else(|| Error::Input("--potential is required".into()))
    }

    /// Potential and boundary; the boundary defaults to a preset's own.
    pub fn problem(&self) -> Result<(&PotentialGrid, &BoundaryPair)> {
        let v = self.potential()?;
        let bc = self
            .boundary
            .as_ref()
            .ok_or_else(|| Error::Input("--boundary is required for file potentials".into()))?;
        Ok((v, bc))
    }
}
