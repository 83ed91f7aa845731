//! Voxel radiation dose field and dosimetry: dose-table ingestion, source
//! placement, the four-stage dose lookup (relative position, distance and
//! bounding, table read, halving-distance approximation), and accumulating
//! dosimeters.

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum DoseError {
    #[error("dose table error at line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("io error reading dose table: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid source geometry: {0}")]
    BadSource(String),
    #[error("non-finite dosimeter position")]
    InvalidPosition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoseRow {
    pub name: String,
    pub dose_rate_sv_s: f64,
    pub dose_rate_sv_hr: f64,
}

/// Voxelized dose-rate field keyed by (i, j, k) mesh indices. Missing
/// voxels are permitted and read as zero.
#[derive(Debug, Clone, Default)]
pub struct DoseTable {
    rows: BTreeMap<(usize, usize, usize), DoseRow>,
}

impl DoseTable {
    pub fn rate_sv_s(&self, i: usize, j: usize, k: usize) -> f64 {
        self.rows
            .get(&(i, j, k))
            .map_or(0.0, |r| r.dose_rate_sv_s)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, idx: (usize, usize, usize), row: DoseRow) {
        self.rows.insert(idx, row);
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(usize, usize, usize), &DoseRow)> {
        self.rows.iter()
    }
}

/// Parses a six-column CSV `name,i,j,k,sv_s,sv_hr`, enforcing that indices
/// fit the declared mesh dimensions, rates are non-negative, and the two
/// unit columns agree (sv_hr = 3600 * sv_s within 1e-9 relative).
pub fn parse_dose_table(text: &str, dims: [usize; 3]) -> Result<DoseTable, DoseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "name,i,j,k,sv_s,sv_hr" => {}
        _ => {
            return Err(DoseError::Table {
                line: 1,
                reason: "expected header name,i,j,k,sv_s,sv_hr".to_string(),
            })
        }
    }
    let mut table = DoseTable::default();
    for (i, raw) in lines {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(DoseError::Table {
                line,
                reason: format!("expected 6 columns, got {}", fields.len()),
            });
        }
        let parse_idx = |s: &str, axis: usize| -> Result<usize, DoseError> {
            let v: usize = s.parse().map_err(|_| DoseError::Table {
                line,
                reason: format!("bad index {s:?}"),
            })?;
            if v >= dims[axis] {
                return Err(DoseError::Table {
                    line,
                    reason: format!("index {v} out of mesh dimension {}", dims[axis]),
                });
            }
            Ok(v)
        };
        let idx = (
            parse_idx(fields[1], 0)?,
            parse_idx(fields[2], 1)?,
            parse_idx(fields[3], 2)?,
        );
        let sv_s: f64 = fields[4].parse().map_err(|_| DoseError::Table {
            line,
            reason: format!("bad sv_s {:?}", fields[4]),
        })?;
        let sv_hr: f64 = fields[5].parse().map_err(|_| DoseError::Table {
            line,
            reason: format!("bad sv_hr {:?}", fields[5]),
        })?;
        if sv_s < 0.0 || sv_hr < 0.0 {
            return Err(DoseError::Table {
                line,
                reason: "negative dose rate".to_string(),
            });
        }
        let expected = sv_s * SECONDS_PER_HOUR;
        let scale = expected.abs().max(1e-30);
        if (sv_hr - expected).abs() / scale > 1e-9 {
            return Err(DoseError::Table {
                line,
                reason: format!("sv_hr {sv_hr} != 3600 * sv_s {sv_s}"),
            });
        }
        table.insert(
            idx,
            DoseRow {
                name: fields[0].to_string(),
                dose_rate_sv_s: sv_s,
                dose_rate_sv_hr: sv_hr,
            },
        );
    }
    Ok(table)
}

pub fn load_dose_table(path: &Path, dims: [usize; 3]) -> Result<DoseTable, DoseError> {
    parse_dose_table(&std::fs::read_to_string(path)?, dims)
}

/// Where the boundary dose rate for the approximation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRateMode {
    /// A single configured scalar (default).
    Configured,
    /// The table value of the boundary voxel along the query ray.
    BoundaryVoxel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    InMesh,
    ApproxZone,
    Out,
}

pub struct RadiationSource {
    pub origin: [f64; 3],
    pub voxel_size_m: f64,
    pub dims: [usize; 3],
    pub table: DoseTable,
    pub halving_distance_l_m: f64,
    pub boundary_rate_sv_s: f64,
    pub max_range_m: f64,
    pub boundary_mode: BoundaryRateMode,
}

impl RadiationSource {
    pub fn new(
        origin: [f64; 3],
        voxel_size_m: f64,
        dims: [usize; 3],
        table: DoseTable,
        halving_distance_l_m: f64,
        boundary_rate_sv_s: f64,
        max_range_m: f64,
    ) -> Result<Self, DoseError> {
        if voxel_size_m <= 0.0 {
            return Err(DoseError::BadSource("voxel_size_m must be > 0".to_string()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(DoseError::BadSource("dims must each be >= 1".to_string()));
        }
        if halving_distance_l_m <= 0.0 {
            return Err(DoseError::BadSource("halving distance must be > 0".to_string()));
        }
        let half_extent = dims
            .iter()
            .map(|&d| d as f64 * voxel_size_m / 2.0)
            .fold(0.0f64, f64::max);
        if max_range_m < half_extent {
            return Err(DoseError::BadSource(format!(
                "max_range_m {max_range_m} below mesh half-extent {half_extent}"
            )));
        }
        Ok(RadiationSource {
            origin,
            voxel_size_m,
            dims,
            table,
            halving_distance_l_m,
            boundary_rate_sv_s,
            max_range_m,
            boundary_mode: BoundaryRateMode::Configured,
        })
    }

    pub fn center(&self) -> [f64; 3] {
        let mut c = self.origin;
        for a in 0..3 {
            c[a] += self.dims[a] as f64 * self.voxel_size_m / 2.0;
        }
        c
    }

    /// Stage 1: world position to relative voxel indices.
    fn voxel_index(&self, pos: [f64; 3]) -> [i64; 3] {
        let mut idx = [0i64; 3];
        for a in 0..3 {
            idx[a] = ((pos[a] - self.origin[a]) / self.voxel_size_m).floor() as i64;
        }
        idx
    }

    fn in_mesh(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    /// Stage 2 helper: distance from the mesh center to the mesh boundary
    /// along the ray toward `dir` (unit vector). A single boundary-radius
    /// scalar is ambiguous for non-cubic meshes, so the boundary is
    /// intersected per ray.
    fn boundary_distance(&self, dir: [f64; 3]) -> f64 {
        let mut t = f64::INFINITY;
        for a in 0..3 {
            let h = self.dims[a] as f64 * self.voxel_size_m / 2.0;
            if dir[a].abs() > 1e-300 {
                t = t.min(h / dir[a].abs());
            }
        }
        if t.is_finite() {
            t
        } else {
            // degenerate direction (query at the exact center)
            self.dims
                .iter()
                .map(|&d| d as f64 * self.voxel_size_m / 2.0)
                .fold(f64::INFINITY, f64::min)
        }
    }

    pub fn classify(&self, pos: [f64; 3]) -> Result<Zone, DoseError> {
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(DoseError::InvalidPosition);
        }
        if self.in_mesh(self.voxel_index(pos)) {
            return Ok(Zone::InMesh);
        }
        let c = self.center();
        let x = dist(pos, c);
        Ok(if x <= self.max_range_m {
            Zone::ApproxZone
        } else {
            Zone::Out
        })
    }

    /// Four-stage dose lookup. Inside the mesh a positive table value wins;
    /// otherwise the halving-distance approximation applies out to
    /// `max_range_m`, beyond which the rate is exactly zero.
    pub fn update_dose(&self, pos: [f64; 3]) -> Result<f64, DoseError> {
        let zone = self.classify(pos)?;
        if zone == Zone::Out {
            return Ok(0.0);
        }

        if zone == Zone::InMesh {
            let idx = self.voxel_index(pos);
            let rate = self
                .table
                .rate_sv_s(idx[0] as usize, idx[1] as usize, idx[2] as usize);
            if rate > 0.0 {
                return Ok(rate);
            }
            // zero table read: the approximation is still consulted
        }

        let c = self.center();
        let x = dist(pos, c);
        let dir = if x > 0.0 {
            [(pos[0] - c[0]) / x, (pos[1] - c[1]) / x, (pos[2] - c[2]) / x]
        } else {
            [0.0, 0.0, 0.0]
        };
        let x0 = self.boundary_distance(dir);
        let d_x0 = match self.boundary_mode {
            BoundaryRateMode::Configured => self.boundary_rate_sv_s,
            BoundaryRateMode::BoundaryVoxel => {
                // voxel just inside the boundary intersection point
                let eps = self.voxel_size_m * 1e-6;
                let p = [
                    c[0] + dir[0] * (x0 - eps),
                    c[1] + dir[1] * (x0 - eps),
                    c[2] + dir[2] * (x0 - eps),
                ];
                let idx = self.voxel_index(p);
                if self.in_mesh(idx) {
                    self.table
                        .rate_sv_s(idx[0] as usize, idx[1] as usize, idx[2] as usize)
                } else {
                    0.0
                }
            }
        };
        Ok(d_x0 * 0.5f64.powf((x - x0) / self.halving_distance_l_m))
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Accumulating probe carried by an agent. Cumulative dose is monotone
/// non-decreasing; the displayed rate is always 3600x the internal Sv/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dosimeter {
    pub cumulative_dose_sv: f64,
    pub current_rate_sv_hr: f64,
    pub position: [f64; 3],
}

impl Dosimeter {
    pub fn at(position: [f64; 3]) -> Self {
        Dosimeter {
            position,
            ..Default::default()
        }
    }

    /// Samples the field at the current position and accumulates over dt.
    pub fn tick(&mut self, source: &RadiationSource, dt_s: f64) -> Result<f64, DoseError> {
        let rate = source.update_dose(self.position)?;
        self.cumulative_dose_sv += rate * dt_s;
        self.current_rate_sv_hr = rate * SECONDS_PER_HOUR;
        Ok(rate)
    }
}
