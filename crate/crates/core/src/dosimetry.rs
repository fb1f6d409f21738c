//! Plan model (prescription, structures, voxel dose grid) and the dose
//! metrics that criteria reference.
//!
//! Every metric is computed straight from voxel doses. The DVH is for
//! reporting and never feeds a verdict.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rulelang::{Level, OutputUnit};

/// Tolerance on `total = fractions * dose_per_fraction`.
pub const PRESCRIPTION_TOLERANCE_GY: f64 = 1e-6;
pub const DVH_BIN_GY: f64 = 0.1;
/// Cold spots are PTV voxels at or below this fraction of the prescription.
pub const COLD_FRACTION: f64 = 0.95;
/// Hot spots are voxels strictly above this fraction of the prescription.
pub const HOT_FRACTION: f64 = 1.07;
pub const PTV: &str = "PTV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "3DCRT")]
    ThreeDCrt,
    #[serde(rename = "IMRT")]
    Imrt,
    #[serde(rename = "VMAT")]
    Vmat,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::ThreeDCrt => "3DCRT",
            Technique::Imrt => "IMRT",
            Technique::Vmat => "VMAT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub technique: Technique,
    pub total_dose_gy: f64,
    pub fractions: u32,
    pub dose_per_fraction_gy: f64,
}

impl Prescription {
    pub fn is_consistent(&self) -> bool {
        (self.total_dose_gy - f64::from(self.fractions) * self.dose_per_fraction_gy).abs()
            <= PRESCRIPTION_TOLERANCE_GY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureRole {
    #[serde(rename = "GTV")]
    Gtv,
    #[serde(rename = "CTV")]
    Ctv,
    #[serde(rename = "PTV")]
    Ptv,
    #[serde(rename = "OAR")]
    Oar,
    #[serde(rename = "other")]
    Other,
}

impl StructureRole {
    pub fn is_target(self) -> bool {
        matches!(
            self,
            StructureRole::Gtv | StructureRole::Ctv | StructureRole::Ptv
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub name: String,
    pub color: String,
    pub role: StructureRole,
    pub voxels: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseGrid {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub values: Vec<f64>,
}

impl DoseGrid {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major with `k` varying fastest.
    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn contains(&self, v: [usize; 3]) -> bool {
        v.iter().zip(self.dims).all(|(c, d)| *c < d)
    }

    pub fn dose(&self, v: [usize; 3]) -> f64 {
        self.values[self.index(v)]
    }

    pub fn voxel_volume_cc(&self) -> f64 {
        self.voxel_size_mm.iter().product::<f64>() / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanModel {
    pub prescription: Prescription,
    pub grid: DoseGrid,
    pub structures: Vec<Structure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DosimetryError {
    #[error("unknown structure {0}")]
    UnknownStructure(String),
    #[error("structure {0} has no voxels")]
    EmptyStructure(String),
    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(String),
}

impl PlanModel {
    pub fn structure(&self, name: &str) -> Result<&Structure, DosimetryError> {
        self.structures
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| DosimetryError::UnknownStructure(name.to_string()))
    }

    pub fn rx(&self) -> f64 {
        self.prescription.total_dose_gy
    }

    /// Doses of the structure's voxels, in structure order.
    pub fn structure_doses(&self, name: &str) -> Result<Vec<f64>, DosimetryError> {
        let s = self.structure(name)?;
        if s.voxels.is_empty() {
            return Err(DosimetryError::EmptyStructure(name.to_string()));
        }
        Ok(s.voxels.iter().map(|v| self.grid.dose(*v)).collect())
    }

    /// Absolute dose threshold of a `Gy` or `%rx` level.
    pub fn resolve_level(&self, level: Level) -> Result<f64, DosimetryError> {
        match level {
            Level::Gy(g) => Ok(g),
            Level::PercentRx(p) => Ok(self.rx() * (p / 100.0)),
            Level::VolumePercent(_) => Err(DosimetryError::InvalidParameter(
                "volume level where a dose level is expected".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeDvh {
    pub structure: String,
    /// `(dose, fraction of volume receiving >= dose)`.
    pub bins: Vec<(f64, f64)>,
}

pub fn dvh(plan: &PlanModel, structure: &str) -> Result<CumulativeDvh, DosimetryError> {
    let mut doses = plan.structure_doses(structure)?;
    doses.sort_by(f64::total_cmp);
    let n = doses.len() as f64;
    let max = doses[doses.len() - 1];
    let last = (max / DVH_BIN_GY).floor() as usize + 1;
    let mut bins = Vec::with_capacity(last + 1);
    let mut below = 0;
    for b in 0..=last {
        let d = b as f64 / 10.0;
        while below < doses.len() && doses[below] < d {
            below += 1;
        }
        bins.push((d, (doses.len() - below) as f64 / n));
    }
    Ok(CumulativeDvh {
        structure: structure.to_string(),
        bins,
    })
}

/// Share of the structure receiving at least `level`, as percent of its
/// volume or in cc.
pub fn v_metric(
    plan: &PlanModel,
    structure: &str,
    level: Level,
    output: OutputUnit,
) -> Result<f64, DosimetryError> {
    let threshold = plan.resolve_level(level)?;
    let doses = plan.structure_doses(structure)?;
    let count = doses.iter().filter(|d| **d >= threshold).count();
    match output {
        OutputUnit::Percent => Ok(100.0 * count as f64 / doses.len() as f64),
        OutputUnit::Cc => Ok(count as f64 * plan.grid.voxel_volume_cc()),
        other => Err(DosimetryError::InvalidParameter(format!(
            "v cannot be expressed as {}",
            other.keyword()
        ))),
    }
}

/// Highest dose received by at least `volume_percent` of the voxels.
pub fn d_of_doses(doses: &[f64], volume_percent: f64) -> Result<f64, DosimetryError> {
    if !(volume_percent > 0.0 && volume_percent <= 100.0) {
        return Err(DosimetryError::InvalidParameter(format!(
            "volume {volume_percent}% outside (0, 100]"
        )));
    }
    let mut sorted = doses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let need = volume_percent * n as f64;
    // Smallest k with 100 * k >= p * n.
    let mut k = (need / 100.0).ceil().clamp(1.0, n as f64) as usize;
    while k > 1 && 100.0 * (k - 1) as f64 >= need {
        k -= 1;
    }
    while k < n && (100.0 * k as f64) < need {
        k += 1;
    }
    Ok(sorted[k - 1])
}

pub fn d_metric(
    plan: &PlanModel,
    structure: &str,
    volume_percent: f64,
) -> Result<f64, DosimetryError> {
    d_of_doses(&plan.structure_doses(structure)?, volume_percent)
}

pub fn mean_dose(plan: &PlanModel, structure: &str) -> Result<f64, DosimetryError> {
    let doses = plan.structure_doses(structure)?;
    Ok(doses.iter().sum::<f64>() / doses.len() as f64)
}

pub fn max_point_dose(plan: &PlanModel, structure: &str) -> Result<f64, DosimetryError> {
    let doses = plan.structure_doses(structure)?;
    Ok(doses.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Prescription-isodose volume over PTV volume, as a voxel-count ratio.
pub fn conformity_index(plan: &PlanModel) -> Result<f64, DosimetryError> {
    let ptv = plan.structure_doses(PTV)?;
    let rx = plan.rx();
    let isodose = plan.grid.values.iter().filter(|d| **d >= rx).count();
    Ok(isodose as f64 / ptv.len() as f64)
}

/// D95 / D5 over the PTV.
pub fn homogeneity_index(plan: &PlanModel) -> Result<f64, DosimetryError> {
    let ptv = plan.structure_doses(PTV)?;
    let d95 = d_of_doses(&ptv, 95.0)?;
    let d5 = d_of_doses(&ptv, 5.0)?;
    if d5 == 0.0 {
        return Err(DosimetryError::DivisionByZero("homogeneity index"));
    }
    Ok(d95 / d5)
}

/// Number of 6-connected components of the voxels selected by `mask`.
pub fn count_components(dims: [usize; 3], mask: &[bool]) -> usize {
    let [nx, ny, nz] = dims;
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(at) = queue.pop_front() {
            let (i, j, k) = (at / (ny * nz), (at / nz) % ny, at % nz);
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(idx(i - 1, j, k));
            }
            if i + 1 < nx {
                visit(idx(i + 1, j, k));
            }
            if j > 0 {
                visit(idx(i, j - 1, k));
            }
            if j + 1 < ny {
                visit(idx(i, j + 1, k));
            }
            if k > 0 {
                visit(idx(i, j, k - 1));
            }
            if k + 1 < nz {
                visit(idx(i, j, k + 1));
            }
        }
    }
    components
}

/// Connected regions of PTV voxels at or below 95% of the prescription.
pub fn count_cold_spots(plan: &PlanModel) -> Result<usize, DosimetryError> {
    let ptv = plan.structure(PTV)?;
    if ptv.voxels.is_empty() {
        return Err(DosimetryError::EmptyStructure(PTV.to_string()));
    }
    let limit = plan.rx() * COLD_FRACTION;
    let mut mask = vec![false; plan.grid.values.len()];
    for v in &ptv.voxels {
        let i = plan.grid.index(*v);
        mask[i] = plan.grid.values[i] <= limit;
    }
    Ok(count_components(plan.grid.dims, &mask))
}

/// Connected regions of any voxels above 107% of the prescription.
pub fn count_hot_spots(plan: &PlanModel) -> Result<usize, DosimetryError> {
    let ptv = plan.structure(PTV)?;
    if ptv.voxels.is_empty() {
        return Err(DosimetryError::EmptyStructure(PTV.to_string()));
    }
    let limit = plan.rx() * HOT_FRACTION;
    let mask: Vec<bool> = plan.grid.values.iter().map(|d| *d > limit).collect();
    Ok(count_components(plan.grid.dims, &mask))
}
