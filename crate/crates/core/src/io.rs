//! JSON file formats, shipped presets and serializable report views.
//!
//! Complex matrices are written row-major as `[re, im]` pairs. Every
//! document carries `"schema": "v1"`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{self, cplx, CMat, HermMatrix};
use crate::model::{BoundaryPair, DiagonalBoundary, PotentialGrid};
use crate::spectral::{BoundState, SpectrumReport};

pub const SCHEMA: &str = "v1";

fn schema() -> String {
    SCHEMA.to_string()
}

/// Complex matrix as rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixRepr(pub Vec<Vec<[f64; 2]>>);

impl MatrixRepr {
    pub fn from_matrix(m: &CMat) -> Self {
        MatrixRepr(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        MatrixRepr(rows.iter().map(|r| r.iter().map(|&x| [x, 0.0]).collect()).collect())
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("ragged matrix rows".into()));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| cplx(self.0[i][j][0], self.0[i][j][1])))
    }

    fn square(&self, n: usize, what: &str) -> Result<CMat> {
        let m = self.to_matrix()?;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Input(format!(
                "{what} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    fn hermitian(&self, n: usize, what: &str) -> Result<HermMatrix> {
        HermMatrix::checked(self.square(n, what)?, 1e-10)
            .map_err(|e| Error::Input(format!("{what}: {e}")))
    }
}

impl From<HermMatrix> for MatrixRepr {
    fn from(h: HermMatrix) -> Self {
        MatrixRepr::from_matrix(h.as_matrix())
    }
}

impl TryFrom<MatrixRepr> for HermMatrix {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        HermMatrix::checked(r.to_matrix()?, 1e-10)
    }
}

/// Shape of a potential file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// Cell values, `samples[i]` on `[i h, (i + 1) h)`.
    Grid { samples: Vec<MatrixRepr> },
    SquareWell { depth_matrix: MatrixRepr, width: f64 },
    DiagonalWells { depths: Vec<f64>, widths: Vec<f64> },
}

/// Potential definition file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialFile {
    #[serde(default = "schema")]
    pub schema: String,
    pub n: usize,
    pub x_max: f64,
    pub h: f64,
    #[serde(flatten)]
    pub kind: PotentialKind,
}

impl PotentialFile {
    pub fn from_grid(v: &PotentialGrid) -> Self {
        PotentialFile {
            schema: schema(),
            n: v.n(),
            x_max: v.x_max(),
            h: v.h(),
            kind: PotentialKind::Grid {
                samples: v.cells().iter().map(|c| MatrixRepr::from_matrix(c.as_matrix())).collect(),
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: PotentialFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA {
            return Err(Error::Input(format!("unsupported schema {:?}", file.schema)));
        }
        Ok(file)
    }

    /// Replaces the grid controls; sampled grids cannot be resampled.
    pub fn with_grid(mut self, h: Option<f64>, x_max: Option<f64>) -> Result<Self> {
        if matches!(self.kind, PotentialKind::Grid { .. }) && (h.is_some() || x_max.is_some()) {
            return Err(Error::Input("grid potentials cannot be resampled".into()));
        }
        if let Some(x) = x_max {
            self.x_max = x;
        }
        if let Some(h) = h {
            self.h = h;
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<PotentialGrid> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Input("n must be positive".into()));
        }
        if !(self.h > 0.0) || !(self.x_max >= 0.0) {
            return Err(Error::Input(format!("bad grid h = {}, x_max = {}", self.h, self.x_max)));
        }
        match &self.kind {
            PotentialKind::Grid { samples } => {
                let cells = samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| s.hermitian(n, &format!("sample {i}")))
                    .collect::<Result<Vec<_>>>()?;
                let v = PotentialGrid::from_cells(n, self.h, cells)?;
                if (v.x_max() - self.x_max).abs() > 1e-9 * self.x_max.max(1.0) {
                    return Err(Error::Input(format!(
                        "x_max = {} disagrees with {} samples of width {}",
                        self.x_max,
                        samples.len(),
                        self.h
                    )));
                }
                Ok(v)
            }
            PotentialKind::SquareWell { depth_matrix, width } => {
                let depth = depth_matrix.hermitian(n, "depth_matrix")?;
                PotentialGrid::square_well(&depth, *width, self.x_max, self.h)
            }
            PotentialKind::DiagonalWells { depths, widths } => {
                if depths.len() != n || widths.len() != n {
                    return Err(Error::Input(format!("diagonal wells need {n} depths and widths")));
                }
                PotentialGrid::diagonal_wells(depths, widths, self.x_max, self.h)
            }
        }
    }
}

/// Boundary file: either the pair `(A, B)` or diagonal angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundarySpec {
    Pair {
        #[serde(rename = "A")]
        a: MatrixRepr,
        #[serde(rename = "B")]
        b: MatrixRepr,
    },
    Angles { angles: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFile {
    #[serde(default = "schema")]
    pub schema: String,
    #[serde(flatten)]
    pub spec: BoundarySpec,
}

impl BoundaryFile {
    pub fn from_pair(bc: &BoundaryPair) -> Self {
        BoundaryFile {
            schema: schema(),
            spec: BoundarySpec::Pair { a: MatrixRepr::from_matrix(&bc.a), b: MatrixRepr::from_matrix(&bc.b) },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: BoundaryFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA {
            return Err(Error::Input(format!("unsupported schema {:?}", file.schema)));
        }
        Ok(file)
    }

    /// Validated boundary pair.
    pub fn build(&self) -> Result<BoundaryPair> {
        match &self.spec {
            BoundarySpec::Pair { a, b } => {
                let a = a.to_matrix()?;
                let n = a.nrows();
                if a.ncols() != n {
                    return Err(Error::Input("A must be square".into()));
                }
                BoundaryPair::new(a, b.square(n, "B")?)
            }
            BoundarySpec::Angles { angles } => Ok(DiagonalBoundary::new(angles.clone())?.to_pair()),
        }
    }
}

/// Built-in problems.
pub const PRESET_NAMES: [&str; 4] = ["zero_robin", "square_well_neumann", "coupled_2x2_well", "star_graph_3edge"];

/// Potential and boundary files of a named preset.
pub fn preset(name: &str) -> Option<(PotentialFile, BoundaryFile)> {
    let well = |n: usize, depth: MatrixRepr, width: f64, h: f64| PotentialFile {
        schema: schema(),
        n,
        x_max: width,
        h,
        kind: PotentialKind::SquareWell { depth_matrix: depth, width },
    };
    let pair = |a: MatrixRepr, b: MatrixRepr| BoundaryFile { schema: schema(), spec: BoundarySpec::Pair { a, b } };
    let eye = |n: usize| MatrixRepr::from_matrix(&matcore::identity(n));
    match name {
        "zero_robin" => Some((
            well(2, MatrixRepr::from_matrix(&matcore::zeros(2)), 1.0, 1e-2),
            pair(eye(2), MatrixRepr::from_real_rows(&[&[-1.0, 0.0], &[0.0, -2.0]])),
        )),
        "square_well_neumann" => Some((
            well(1, MatrixRepr::from_real_rows(&[&[-4.0]]), 1.0, 1e-3),
            pair(eye(1), MatrixRepr::from_real_rows(&[&[0.0]])),
        )),
        "coupled_2x2_well" => Some((
            well(2, MatrixRepr::from_real_rows(&[&[-3.0, 1.0], &[1.0, -2.0]]), 1.5, 1.5e-3),
            pair(
                eye(2),
                MatrixRepr(vec![vec![[0.5, 0.0], [0.0, 0.3]], vec![[0.0, -0.3], [-0.5, 0.0]]]),
            ),
        )),
        "star_graph_3edge" => {
            // Continuity at the vertex and sum of derivatives = alpha psi(0).
            let alpha = -3.0;
            let a = MatrixRepr::from_real_rows(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
            let c = alpha / 3.0;
            let b = MatrixRepr::from_real_rows(&[&[c, 1.0, 1.0], &[c, -1.0, 1.0], &[c, 0.0, -2.0]]);
            Some((well(3, MatrixRepr::from_real_rows(&[&[-2.0, 0.0, 0.0], &[0.0, -2.0, 0.0], &[0.0, 0.0, -2.0]]), 1.0, 1e-3), pair(a, b)))
        }
        _ => None,
    }
}

/// Built problem of a named preset.
pub fn load_preset(name: &str) -> Result<(PotentialGrid, BoundaryPair)> {
    let (v, bc) = preset(name).ok_or_else(|| Error::Input(format!("unknown preset {name:?}")))?;
    Ok((v.build()?, bc.build()?))
}

/// One bound state in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRepr {
    pub kappa: f64,
    pub lambda: f64,
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: MatrixRepr,
    #[serde(rename = "C")]
    pub c: MatrixRepr,
}

impl From<&BoundState> for StateRepr {
    fn from(s: &BoundState) -> Self {
        StateRepr {
            kappa: s.kappa,
            lambda: s.lambda(),
            m: s.m,
            q: MatrixRepr::from_matrix(&s.q.matrix),
            c: MatrixRepr::from_matrix(&s.c),
        }
    }
}

/// Serializable view of a [`SpectrumReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRepr {
    pub kappa_max: f64,
    pub states: Vec<StateRepr>,
    pub flags: Vec<String>,
}

impl From<&SpectrumReport> for SpectrumRepr {
    fn from(r: &SpectrumReport) -> Self {
        SpectrumRepr {
            kappa_max: r.kappa_max,
            states: r.states.iter().map(StateRepr::from).collect(),
            flags: r.flags.clone(),
        }
    }
}

/// Versioned wrapper for command output.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema: &'static str,
    pub command: String,
    pub passed: bool,
    pub data: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, passed: bool, data: T) -> Self {
        Envelope { schema: SCHEMA, command: command.to_string(), passed, data }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
