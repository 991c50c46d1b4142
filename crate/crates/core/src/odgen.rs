//! Hourly origin-destination demand estimation from boundary flow
//! observations: the structural zero mask, the equality constraints tying
//! demand sums to observed flows, and a projected-gradient nonnegative
//! least-squares solver.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::network::{Zone, ZoneClass, ZoneId};

/// Conventional bound for "the constraints are satisfiable exactly": a
/// solve counts as feasible when ‖Ad−b‖² ≤ tol · ‖b‖².
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OdgenError {
    #[error("demand from {origin} to {dest} is structurally zero and cannot be set to {value}")]
    StructuralZero {
        origin: ZoneId,
        dest: ZoneId,
        value: f64,
    },
    #[error("demand from {origin} to {dest} must be finite and >= 0, got {value}")]
    InvalidDemand {
        origin: ZoneId,
        dest: ZoneId,
        value: f64,
    },
    #[error("vector length {got} does not match the {want} free entries of the mask")]
    VectorLength { got: usize, want: usize },
    #[error("constraint system has {cols} columns but the mask has {free} free entries")]
    SystemShape { cols: usize, free: usize },
    #[error("observation for {zone} ({what}) is missing")]
    MissingObservation { zone: ZoneId, what: &'static str },
    #[error("observation references unknown {zone}")]
    UnknownObservationZone { zone: ZoneId },
    #[error("observation value for {zone} ({what}) must be finite and >= 0, got {value}")]
    InvalidObservation {
        zone: ZoneId,
        what: String,
        value: f64,
    },
    #[error("constraint row {tag} references no free demand entry")]
    EmptyConstraintRow { tag: RowTag },
    #[error(
        "solver stopped at objective {objective:.6e}, above the feasibility bound {bound:.6e}"
    )]
    Convergence { objective: f64, bound: f64 },
    #[error("{path}:{line}: {msg}")]
    ParseLine {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Which demand entries are structurally zero, given the zone classes.
///
/// An entry (i, j) is free exactly when i ≠ j and a trip from i's class to
/// j's class is possible (see [`ZoneClass::demand_allowed`]). Everything
/// else — the diagonal, anything out of an exit or into an entrance,
/// entrance-to-exit shortcuts, trips among curbsides and parking, and
/// cross-level curbside pairs — is pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMask {
    z: usize,
    masked: Vec<bool>,
    free: Vec<(ZoneId, ZoneId)>,
    free_index: Vec<usize>,
}

const NOT_FREE: usize = usize::MAX;

pub fn build_zero_mask(zones: &[Zone]) -> ZeroMask {
    let z = zones.len();
    let mut masked = vec![true; z * z];
    let mut free = Vec::new();
    let mut free_index = vec![NOT_FREE; z * z];
    for (i, zi) in zones.iter().enumerate() {
        for (j, zj) in zones.iter().enumerate() {
            if i != j && ZoneClass::demand_allowed(zi.class, zj.class) {
                masked[i * z + j] = false;
                free_index[i * z + j] = free.len();
                free.push((zi.id, zj.id));
            }
        }
    }
    ZeroMask {
        z,
        masked,
        free,
        free_index,
    }
}

impl ZeroMask {
    pub fn zone_count(&self) -> usize {
        self.z
    }

    pub fn is_masked(&self, origin: ZoneId, dest: ZoneId) -> bool {
        self.masked[origin.0 as usize * self.z + dest.0 as usize]
    }

    /// Free entries in row-major order; this is the column order of the
    /// constraint matrix and the component order of demand vectors.
    pub fn free_entries(&self) -> &[(ZoneId, ZoneId)] {
        &self.free
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Column index of a free entry.
    pub fn free_index(&self, origin: ZoneId, dest: ZoneId) -> Option<usize> {
        let idx = self.free_index[origin.0 as usize * self.z + dest.0 as usize];
        (idx != NOT_FREE).then_some(idx)
    }
}

/// One hour of zone-to-zone demand. Structurally zero entries are exactly
/// 0.0 and cannot be written.
#[derive(Debug, Clone, PartialEq)]
pub struct ODMatrix {
    pub hour_index: u32,
    z: usize,
    demand: Vec<f64>,
    mask: ZeroMask,
}

impl ODMatrix {
    pub fn zeros(mask: &ZeroMask, hour_index: u32) -> Self {
        ODMatrix {
            hour_index,
            z: mask.zone_count(),
            demand: vec![0.0; mask.zone_count() * mask.zone_count()],
            mask: mask.clone(),
        }
    }

    pub fn zone_count(&self) -> usize {
        self.z
    }

    pub fn mask(&self) -> &ZeroMask {
        &self.mask
    }

    pub fn demand(&self, origin: ZoneId, dest: ZoneId) -> f64 {
        self.demand[origin.0 as usize * self.z + dest.0 as usize]
    }

    pub fn set_demand(&mut self, origin: ZoneId, dest: ZoneId, value: f64) -> Result<(), OdgenError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(OdgenError::InvalidDemand {
                origin,
                dest,
                value,
            });
        }
        if self.mask.is_masked(origin, dest) {
            if value != 0.0 {
                return Err(OdgenError::StructuralZero {
                    origin,
                    dest,
                    value,
                });
            }
            return Ok(());
        }
        self.demand[origin.0 as usize * self.z + dest.0 as usize] = value;
        Ok(())
    }

    /// The free entries as a vector, in mask order.
    pub fn vectorize(&self) -> Vec<f64> {
        self.mask
            .free_entries()
            .iter()
            .map(|&(i, j)| self.demand(i, j))
            .collect()
    }

    /// Inverse of [`vectorize`]: rebuilds a matrix with exact zeros at all
    /// masked entries.
    pub fn from_vector(
        mask: &ZeroMask,
        hour_index: u32,
        values: &[f64],
    ) -> Result<Self, OdgenError> {
        if values.len() != mask.free_count() {
            return Err(OdgenError::VectorLength {
                got: values.len(),
                want: mask.free_count(),
            });
        }
        let mut od = ODMatrix::zeros(mask, hour_index);
        for (&(i, j), &v) in mask.free_entries().iter().zip(values) {
            od.set_demand(i, j, v)?;
        }
        Ok(od)
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    /// Entries with strictly positive demand, row-major.
    pub fn positive_entries(&self) -> Vec<(ZoneId, ZoneId, f64)> {
        self.mask
            .free_entries()
            .iter()
            .filter_map(|&(i, j)| {
                let d = self.demand(i, j);
                (d > 0.0).then_some((i, j, d))
            })
            .collect()
    }
}

/// Per-structure parking counts for one hour, split by terminal level.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParkingFlows {
    pub inflow_upper: f64,
    pub inflow_lower: f64,
    pub outflow_upper: f64,
    pub outflow_lower: f64,
}

/// One hour of boundary observations: flow at every entrance and exit
/// zone, plus per-level inflow/outflow totals at every parking structure.
/// Curbside zones are unobserved.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowObservation {
    pub hour_index: u32,
    pub boundary: BTreeMap<ZoneId, f64>,
    pub parking: BTreeMap<ZoneId, ParkingFlows>,
}

impl FlowObservation {
    pub fn new(hour_index: u32) -> Self {
        FlowObservation {
            hour_index,
            boundary: BTreeMap::new(),
            parking: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), OdgenError> {
        for (&zone, &v) in &self.boundary {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OdgenError::InvalidObservation {
                    zone,
                    what: "boundary flow".into(),
                    value: v,
                });
            }
        }
        for (&zone, p) in &self.parking {
            for (what, v) in [
                ("parking inflow upper", p.inflow_upper),
                ("parking inflow lower", p.inflow_lower),
                ("parking outflow upper", p.outflow_upper),
                ("parking outflow lower", p.outflow_lower),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(OdgenError::InvalidObservation {
                        zone,
                        what: what.into(),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Role of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Total demand leaving an entrance equals its observed flow.
    EntranceTotal,
    /// Total demand arriving at an exit equals its observed flow.
    ExitTotal,
    /// Demand from upper-level entrances into one parking structure.
    ParkingInflowUpper,
    /// Demand from lower-level entrances into one parking structure.
    ParkingInflowLower,
    /// Demand from one parking structure to upper-level exits.
    ParkingOutflowUpper,
    /// Demand from one parking structure to lower-level exits.
    ParkingOutflowLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowTag {
    pub kind: RowKind,
    pub zone: ZoneId,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            RowKind::EntranceTotal => "entrance total",
            RowKind::ExitTotal => "exit total",
            RowKind::ParkingInflowUpper => "parking inflow (upper)",
            RowKind::ParkingInflowLower => "parking inflow (lower)",
            RowKind::ParkingOutflowUpper => "parking outflow (upper)",
            RowKind::ParkingOutflowLower => "parking outflow (lower)",
        };
        write!(f, "{kind} for {}", self.zone)
    }
}

/// Equality system A·d = b over the free demand entries.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub matrix: Mat,
    pub rhs: Vec<f64>,
    pub row_tags: Vec<RowTag>,
}

impl ConstraintSystem {
    /// ‖A d − b‖²
    pub fn objective(&self, d: &[f64]) -> f64 {
        let r = self.residual(d);
        linalg::dot(&r, &r)
    }

    fn residual(&self, d: &[f64]) -> Vec<f64> {
        let mut r = self.matrix.matvec(d);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }
}

/// Builds the equality constraints for one hour of observations:
/// - one row per entrance zone (its free row sum = observed flow),
/// - one row per exit zone (its free column sum = observed flow),
/// - four rows per parking structure (per-level inflow and outflow totals).
pub fn assemble_constraints(
    zones: &[Zone],
    obs: &FlowObservation,
    mask: &ZeroMask,
) -> Result<ConstraintSystem, OdgenError> {
    obs.validate()?;
    for &zone in obs.boundary.keys() {
        match zones.get(zone.0 as usize) {
            Some(z) if z.class.is_entrance() || z.class.is_exit() => {}
            Some(_) | None => return Err(OdgenError::UnknownObservationZone { zone }),
        }
    }
    for &zone in obs.parking.keys() {
        match zones.get(zone.0 as usize) {
            Some(z) if z.class == ZoneClass::Parking => {}
            Some(_) | None => return Err(OdgenError::UnknownObservationZone { zone }),
        }
    }

    let cols = mask.free_count();
    let mut rows: Vec<(RowTag, Vec<usize>, f64)> = Vec::new();
    for z in zones {
        match z.class {
            ZoneClass::UpperEntrance | ZoneClass::LowerEntrance => {
                let q = *obs.boundary.get(&z.id).ok_or(OdgenError::MissingObservation {
                    zone: z.id,
                    what: "entrance flow",
                })?;
                let cols: Vec<usize> = mask
                    .free_entries()
                    .iter()
                    .enumerate()
                    .filter(|(_, &(i, _))| i == z.id)
                    .map(|(c, _)| c)
                    .collect();
                rows.push((
                    RowTag {
                        kind: RowKind::EntranceTotal,
                        zone: z.id,
                    },
                    cols,
                    q,
                ));
            }
            ZoneClass::UpperExit | ZoneClass::LowerExit => {
                let q = *obs.boundary.get(&z.id).ok_or(OdgenError::MissingObservation {
                    zone: z.id,
                    what: "exit flow",
                })?;
                let cols: Vec<usize> = mask
                    .free_entries()
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, j))| j == z.id)
                    .map(|(c, _)| c)
                    .collect();
                rows.push((
                    RowTag {
                        kind: RowKind::ExitTotal,
                        zone: z.id,
                    },
                    cols,
                    q,
                ));
            }
            ZoneClass::Parking => {
                let p = obs.parking.get(&z.id).ok_or(OdgenError::MissingObservation {
                    zone: z.id,
                    what: "parking flows",
                })?;
                let by_origin_class = |class: ZoneClass| -> Vec<usize> {
                    mask.free_entries()
                        .iter()
                        .enumerate()
                        .filter(|(_, &(i, j))| j == z.id && zones[i.0 as usize].class == class)
                        .map(|(c, _)| c)
                        .collect()
                };
                let by_dest_class = |class: ZoneClass| -> Vec<usize> {
                    mask.free_entries()
                        .iter()
                        .enumerate()
                        .filter(|(_, &(i, j))| i == z.id && zones[j.0 as usize].class == class)
                        .map(|(c, _)| c)
                        .collect()
                };
                rows.push((
                    RowTag {
                        kind: RowKind::ParkingInflowUpper,
                        zone: z.id,
                    },
                    by_origin_class(ZoneClass::UpperEntrance),
                    p.inflow_upper,
                ));
                rows.push((
                    RowTag {
                        kind: RowKind::ParkingInflowLower,
                        zone: z.id,
                    },
                    by_origin_class(ZoneClass::LowerEntrance),
                    p.inflow_lower,
                ));
                rows.push((
                    RowTag {
                        kind: RowKind::ParkingOutflowUpper,
                        zone: z.id,
                    },
                    by_dest_class(ZoneClass::UpperExit),
                    p.outflow_upper,
                ));
                rows.push((
                    RowTag {
                        kind: RowKind::ParkingOutflowLower,
                        zone: z.id,
                    },
                    by_dest_class(ZoneClass::LowerExit),
                    p.outflow_lower,
                ));
            }
            ZoneClass::UpperCurbside | ZoneClass::LowerCurbside => {}
        }
    }

    let mut matrix = Mat::zeros(rows.len(), cols);
    let mut rhs = Vec::with_capacity(rows.len());
    let mut row_tags = Vec::with_capacity(rows.len());
    for (r, (tag, cs, q)) in rows.into_iter().enumerate() {
        if cs.is_empty() {
            return Err(OdgenError::EmptyConstraintRow { tag });
        }
        for c in cs {
            matrix.set(r, c, 1.0);
        }
        rhs.push(q);
        row_tags.push(tag);
    }
    Ok(ConstraintSystem {
        matrix,
        rhs,
        row_tags,
    })
}

/// Derives the observation an ideal sensor system would report for a known
/// demand matrix: entrance/exit totals and per-level parking counts.
pub fn observation_from_matrix(
    zones: &[Zone],
    od: &ODMatrix,
) -> Result<FlowObservation, OdgenError> {
    let mut obs = FlowObservation::new(od.hour_index);
    for z in zones {
        match z.class {
            ZoneClass::UpperEntrance | ZoneClass::LowerEntrance => {
                let q: f64 = zones.iter().map(|d| od.demand(z.id, d.id)).sum();
                obs.boundary.insert(z.id, q);
            }
            ZoneClass::UpperExit | ZoneClass::LowerExit => {
                let q: f64 = zones.iter().map(|o| od.demand(o.id, z.id)).sum();
                obs.boundary.insert(z.id, q);
            }
            ZoneClass::Parking => {
                let sum_from = |class: ZoneClass| -> f64 {
                    zones
                        .iter()
                        .filter(|o| o.class == class)
                        .map(|o| od.demand(o.id, z.id))
                        .sum()
                };
                let sum_to = |class: ZoneClass| -> f64 {
                    zones
                        .iter()
                        .filter(|d| d.class == class)
                        .map(|d| od.demand(z.id, d.id))
                        .sum()
                };
                obs.parking.insert(
                    z.id,
                    ParkingFlows {
                        inflow_upper: sum_from(ZoneClass::UpperEntrance),
                        inflow_lower: sum_from(ZoneClass::LowerEntrance),
                        outflow_upper: sum_to(ZoneClass::UpperExit),
                        outflow_lower: sum_to(ZoneClass::LowerExit),
                    },
                );
            }
            _ => {}
        }
    }
    Ok(obs)
}

/// Solver knobs. The defaults match the projected-gradient scheme the rest
/// of the pipeline assumes: fixed step 1/λmax(AᵀA), stop on a relative
/// objective improvement below `rel_improvement`.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub rel_improvement: f64,
    /// When set, fail unless the final objective is ≤ tol · ‖b‖².
    pub feasibility_tol: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 50_000,
            rel_improvement: 1e-9,
            feasibility_tol: None,
        }
    }
}

/// Solver output: the demand matrix plus the objective trace, which is
/// monotone nonincreasing by construction.
#[derive(Debug, Clone)]
pub struct OdSolve {
    pub matrix: ODMatrix,
    pub objective: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

/// Minimizes ‖A d − b‖² subject to d ≥ 0 by projected gradient descent
/// from d = 0, with the fixed step 1/λmax(AᵀA). Deterministic: no random
/// state anywhere.
pub fn solve_feasible_od(
    sys: &ConstraintSystem,
    mask: &ZeroMask,
    hour_index: u32,
    opts: &SolveOptions,
) -> Result<OdSolve, OdgenError> {
    let n = sys.matrix.cols();
    if n != mask.free_count() {
        return Err(OdgenError::SystemShape {
            cols: n,
            free: mask.free_count(),
        });
    }
    let b_norm2 = linalg::dot(&sys.rhs, &sys.rhs);
    let mut d = vec![0.0; n];
    let mut objective = sys.objective(&d);
    let mut trace = vec![objective];
    let mut iterations = 0;

    let lambda = linalg::largest_eigenvalue_gram(&sys.matrix);
    if lambda > 0.0 {
        // Slightly shrunken step so a marginally low eigenvalue estimate
        // cannot break monotonicity.
        let step = 1.0 / (lambda * (1.0 + 1e-9));
        for _ in 0..opts.max_iterations {
            if objective == 0.0 {
                break;
            }
            let grad = sys.matrix.matvec_t(&sys.residual(&d));
            let mut next = d.clone();
            for (x, g) in next.iter_mut().zip(&grad) {
                *x = (*x - step * g).max(0.0);
            }
            let next_obj = sys.objective(&next);
            iterations += 1;
            trace.push(next_obj);
            let improvement = objective - next_obj;
            d = next;
            let stalled = improvement < opts.rel_improvement * objective;
            objective = next_obj;
            if stalled {
                break;
            }
        }
    }

    if let Some(tol) = opts.feasibility_tol {
        let bound = tol * b_norm2;
        if objective > bound {
            return Err(OdgenError::Convergence { objective, bound });
        }
    }
    Ok(OdSolve {
        matrix: ODMatrix::from_vector(mask, hour_index, &d)?,
        objective,
        iterations,
        objective_trace: trace,
    })
}

// --- file formats ---------------------------------------------------------

fn io_err(path: &Path, source: std::io::Error) -> OdgenError {
    OdgenError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn line_err(path: &Path, line: usize, msg: impl Into<String>) -> OdgenError {
    OdgenError::ParseLine {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Writes one or more hourly demand matrices. Each block is a
/// `# od-matrix zones=Z hour=H` header, a column header, and one row per
/// free entry (including zero-valued ones).
pub fn save_od_matrices(matrices: &[ODMatrix], path: &Path) -> Result<(), OdgenError> {
    let mut out = String::new();
    for od in matrices {
        out.push_str(&crate::textio::format_kv_header(
            "od-matrix",
            &[
                ("zones", od.zone_count().to_string()),
                ("hour", od.hour_index.to_string()),
            ],
        ));
        out.push('\n');
        out.push_str("origin_zone,dest_zone,demand\n");
        for &(i, j) in od.mask.free_entries() {
            out.push_str(&format!("{},{},{}\n", i.0, j.0, od.demand(i, j)));
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads every matrix block from an OD file. Each block must list exactly
/// the free entries of `mask`, once each.
pub fn load_od_matrices(path: &Path, mask: &ZeroMask) -> Result<Vec<ODMatrix>, OdgenError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut result: Vec<ODMatrix> = Vec::new();
    let mut current: Option<(ODMatrix, usize)> = None;
    let mut finish = |cur: Option<(ODMatrix, usize)>, line: usize| -> Result<(), OdgenError> {
        if let Some((od, seen)) = cur {
            if seen != mask.free_count() {
                return Err(line_err(
                    path,
                    line,
                    format!(
                        "matrix block for hour {} has {seen} rows, expected {}",
                        od.hour_index,
                        mask.free_count()
                    ),
                ));
            }
            result.push(od);
        }
        Ok(())
    };
    for (ln, raw) in text.lines().enumerate() {
        let lineno = ln + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(kv) = crate::textio::kv_header(line, "od-matrix") {
            let prev = current.take();
            finish(prev, lineno)?;
            let zones: usize = kv
                .get("zones")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| line_err(path, lineno, "header needs zones=<int>"))?;
            let hour: u32 = kv
                .get("hour")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| line_err(path, lineno, "header needs hour=<int>"))?;
            if zones != mask.zone_count() {
                return Err(line_err(
                    path,
                    lineno,
                    format!("zones={zones} does not match the network's {}", mask.zone_count()),
                ));
            }
            current = Some((ODMatrix::zeros(mask, hour), 0));
            continue;
        }
        if line.starts_with('#') || line.starts_with("origin_zone") {
            continue;
        }
        let (od, seen) = current
            .as_mut()
            .ok_or_else(|| line_err(path, lineno, "data row before any od-matrix header"))?;
        let mut parts = line.split(',');
        let mut field = |name: &str| {
            parts
                .next()
                .map(str::trim)
                .ok_or_else(|| line_err(path, lineno, format!("missing column {name}")))
        };
        let i: u32 = field("origin_zone")?
            .parse()
            .map_err(|_| line_err(path, lineno, "origin_zone must be an integer"))?;
        let j: u32 = field("dest_zone")?
            .parse()
            .map_err(|_| line_err(path, lineno, "dest_zone must be an integer"))?;
        let v: f64 = field("demand")?
            .parse()
            .map_err(|_| line_err(path, lineno, "demand must be a number"))?;
        if i as usize >= mask.zone_count() || j as usize >= mask.zone_count() {
            return Err(line_err(path, lineno, format!("zone pair ({i}, {j}) out of range")));
        }
        if mask.is_masked(ZoneId(i), ZoneId(j)) {
            return Err(line_err(
                path,
                lineno,
                format!("entry ({i}, {j}) is structurally zero and cannot appear"),
            ));
        }
        if od.demand(ZoneId(i), ZoneId(j)) != 0.0 {
            return Err(line_err(path, lineno, format!("duplicate entry ({i}, {j})")));
        }
        od.set_demand(ZoneId(i), ZoneId(j), v)
            .map_err(|e| line_err(path, lineno, e.to_string()))?;
        *seen += 1;
    }
    let last_line = text.lines().count();
    finish(current.take(), last_line)?;
    Ok(result)
}

const OBS_KINDS: [(&str, fn(&mut ParkingFlows) -> &mut f64); 4] = [
    ("parking_in_upper", |p| &mut p.inflow_upper),
    ("parking_in_lower", |p| &mut p.inflow_lower),
    ("parking_out_upper", |p| &mut p.outflow_upper),
    ("parking_out_lower", |p| &mut p.outflow_lower),
];

/// Writes hourly observations as `hour,zone,kind,value` rows under a
/// `# flow-observations` header.
pub fn save_observations(
    observations: &[FlowObservation],
    zones: usize,
    path: &Path,
) -> Result<(), OdgenError> {
    let mut out = String::new();
    out.push_str(&crate::textio::format_kv_header(
        "flow-observations",
        &[("zones", zones.to_string())],
    ));
    out.push('\n');
    out.push_str("hour,zone,kind,value\n");
    for obs in observations {
        for (&zone, &v) in &obs.boundary {
            out.push_str(&format!("{},{},boundary,{}\n", obs.hour_index, zone.0, v));
        }
        for (&zone, p) in &obs.parking {
            let mut p = *p;
            for (kind, get) in OBS_KINDS {
                out.push_str(&format!(
                    "{},{},{kind},{}\n",
                    obs.hour_index,
                    zone.0,
                    *get(&mut p)
                ));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads an observation file and checks every row against the zone table:
/// `boundary` rows must name entrance or exit zones, parking rows must
/// name parking zones, and no (hour, zone, kind) may repeat.
pub fn load_observations(path: &Path, zones: &[Zone]) -> Result<Vec<FlowObservation>, OdgenError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut by_hour: BTreeMap<u32, FlowObservation> = BTreeMap::new();
    let mut seen: std::collections::BTreeSet<(u32, u32, String)> = Default::default();
    let mut header_seen = false;
    for (ln, raw) in text.lines().enumerate() {
        let lineno = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("hour,") {
            continue;
        }
        if let Some(kv) = crate::textio::kv_header(line, "flow-observations") {
            header_seen = true;
            if let Some(z) = kv.get("zones") {
                let z: usize = z
                    .parse()
                    .map_err(|_| line_err(path, lineno, "zones must be an integer"))?;
                if z != zones.len() {
                    return Err(line_err(
                        path,
                        lineno,
                        format!("zones={z} does not match the network's {}", zones.len()),
                    ));
                }
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            return Err(line_err(path, lineno, "missing # flow-observations header"));
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(line_err(path, lineno, "expected hour,zone,kind,value"));
        }
        let hour: u32 = parts[0]
            .parse()
            .map_err(|_| line_err(path, lineno, "hour must be an integer"))?;
        let zone_raw: u32 = parts[1]
            .parse()
            .map_err(|_| line_err(path, lineno, "zone must be an integer"))?;
        let kind = parts[2];
        let value: f64 = parts[3]
            .parse()
            .map_err(|_| line_err(path, lineno, "value must be a number"))?;
        let zone = ZoneId(zone_raw);
        let class = zones
            .get(zone_raw as usize)
            .map(|z| z.class)
            .ok_or_else(|| line_err(path, lineno, format!("unknown zone {zone_raw}")))?;
        if !seen.insert((hour, zone_raw, kind.to_string())) {
            return Err(line_err(
                path,
                lineno,
                format!("duplicate row for hour {hour}, zone {zone_raw}, kind {kind}"),
            ));
        }
        let obs = by_hour.entry(hour).or_insert_with(|| FlowObservation::new(hour));
        if kind == "boundary" {
            if !(class.is_entrance() || class.is_exit()) {
                return Err(line_err(
                    path,
                    lineno,
                    format!("zone {zone_raw} is {class}, boundary rows need an entrance or exit"),
                ));
            }
            obs.boundary.insert(zone, value);
        } else if let Some((_, get)) = OBS_KINDS.iter().find(|(k, _)| *k == kind) {
            if class != ZoneClass::Parking {
                return Err(line_err(
                    path,
                    lineno,
                    format!("zone {zone_raw} is {class}, {kind} rows need a parking zone"),
                ));
            }
            let p = obs.parking.entry(zone).or_default();
            *get(p) = value;
        } else {
            return Err(line_err(path, lineno, format!("unknown kind {kind}")));
        }
    }
    let result: Vec<FlowObservation> = by_hour.into_values().collect();
    for obs in &result {
        obs.validate()?;
    }
    Ok(result)
}
