//! Time-series and snapshot writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::assembly::FieldState;
use crate::error::{Error, Result};
use crate::integrator::StepDiagnostics;
use crate::space::TensorSpace;

pub const TIMESERIES_HEADER: &str = "step,t,dt_effective,E,E_c,E_e,mass,newton_iters,residual_norm";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotFormat {
    VtkStructured,
    RawBinary,
}

impl SnapshotFormat {
    pub fn name(self) -> &'static str {
        match self {
            SnapshotFormat::VtkStructured => "vtk_structured",
            SnapshotFormat::RawBinary => "raw_binary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vtk_structured" => Some(SnapshotFormat::VtkStructured),
            "raw_binary" => Some(SnapshotFormat::RawBinary),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::VtkStructured => "vtk",
            SnapshotFormat::RawBinary => "bin",
        }
    }
}

impl std::str::FromStr for SnapshotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s).ok_or_else(|| Error::UnknownFormat(s.to_string()))
    }
}

/// One row of the time-series file.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRow {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub energy: f64,
    pub convex: f64,
    pub concave: f64,
    pub mass: f64,
    pub newton_iterations: usize,
    pub residual_norm: f64,
}

impl From<&StepDiagnostics> for TimeSeriesRow {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            step: d.step,
            time: d.time,
            dt: d.dt,
            energy: d.energy.total,
            convex: d.energy.convex,
            concave: d.energy.concave,
            mass: d.mass,
            newton_iterations: d.newton_iterations,
            residual_norm: d.residual_norm,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn write_timeseries(diagnostics: &[StepDiagnostics], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{TIMESERIES_HEADER}").map_err(io_err(path))?;
    for d in diagnostics {
        let r = TimeSeriesRow::from(d);
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.step, r.time, r.dt, r.energy, r.convex, r.concave, r.mass, r.newton_iterations, r.residual_norm
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeSeriesRow>> {
    let file = File::open(path).map_err(io_err(path))?;
    let bad = |line: usize, what: &str| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {line}: {what}")),
        )
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if i == 0 {
            if line != TIMESERIES_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(i + 1, "expected 9 columns"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad integer"));
        rows.push(TimeSeriesRow {
            step: int(f[0])?,
            time: float(f[1])?,
            dt: float(f[2])?,
            energy: float(f[3])?,
            convex: float(f[4])?,
            concave: float(f[5])?,
            mass: float(f[6])?,
            newton_iterations: int(f[7])?,
            residual_norm: float(f[8])?,
        });
    }
    Ok(rows)
}

/// Vertex samples with the periodic endpoint repeated: `m_k + 1` points per
/// direction, first direction fastest. Returns the sizes and the values.
pub fn vertex_grid(space: &TensorSpace, coeffs: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let shape = space.shape();
    let base = space.sample_vertices(coeffs);
    let ext: Vec<usize> = shape.iter().map(|m| m + 1).collect();
    let total: usize = ext.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut i in 0..total {
        let mut src = 0;
        let mut stride = 1;
        for (&n, &m) in ext.iter().zip(&shape) {
            src += ((i % n) % m) * stride;
            stride *= m;
            i /= n;
        }
        out.push(base[src]);
    }
    (ext, out)
}

pub fn write_snapshot(
    space: &TensorSpace,
    state: &FieldState,
    path: &Path,
    format: SnapshotFormat,
) -> Result<()> {
    state.check(space)?;
    let (ext, values) = vertex_grid(space, &state.coefficients);
    let mut dims = [1usize; 3];
    dims[..ext.len()].copy_from_slice(&ext);
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        SnapshotFormat::VtkStructured => {
            let mut spacing = [1.0; 3];
            for (s, d) in spacing.iter_mut().zip(space.directions()) {
                *s = d.h();
            }
            write!(
                w,
                "# vtk DataFile Version 3.0\nphi t={:e} step={}\nASCII\nDATASET STRUCTURED_POINTS\n\
                 DIMENSIONS {} {} {}\nORIGIN 0 0 0\nSPACING {:e} {:e} {:e}\nPOINT_DATA {}\n\
                 SCALARS phi double 1\nLOOKUP_TABLE default\n",
                state.time,
                state.step,
                dims[0],
                dims[1],
                dims[2],
                spacing[0],
                spacing[1],
                spacing[2],
                values.len()
            )
            .map_err(io_err(path))?;
            for v in &values {
                writeln!(w, "{v:e}").map_err(io_err(path))?;
            }
        }
        SnapshotFormat::RawBinary => {
            let header = [space.dim(), dims[0], dims[1], dims[2]];
            for h in header {
                w.write_all(&(h as u64).to_le_bytes()).map_err(io_err(path))?;
            }
            for v in &values {
                w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a `raw_binary` snapshot back: `(dim, [n1, n2, n3], values)`.
pub fn read_raw_snapshot(path: &Path) -> Result<(usize, [usize; 3], Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let invalid = |msg: &str| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()),
        )
    };
    if bytes.len() < 32 || bytes.len() % 8 != 0 {
        return Err(invalid("truncated snapshot"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let dim = word(0) as usize;
    let n = [word(1) as usize, word(2) as usize, word(3) as usize];
    let count = n[0] * n[1] * n[2];
    if bytes.len() != 32 + 8 * count {
        return Err(invalid("payload size does not match header"));
    }
    let values = (0..count).map(|k| f64::from_bits(word(4 + k))).collect();
    Ok((dim, n, values))
}

pub fn snapshot_path(dir: &Path, step: usize, format: SnapshotFormat) -> PathBuf {
    dir.join(format!("phi_{step:07}.{}", format.extension()))
}
