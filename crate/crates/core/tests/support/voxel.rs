//! Seeded random plans and a brute-force voxel oracle for every metric.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtqa_core::dosimetry::{
    DoseGrid, PlanModel, Prescription, Structure, StructureRole, Technique,
};

pub const MAX_EDGE: usize = 50;

/// Doses are multiples of 1/8 Gy so sums are exact in any order.
fn eighth(x: f64) -> f64 {
    (x * 8.0).round() / 8.0
}

fn random_box(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Vec<[usize; 3]> {
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for a in 0..3 {
        let len = rng.gen_range(1..=dims[a].min(12));
        lo[a] = rng.gen_range(0..=dims[a] - len);
        hi[a] = lo[a] + len;
    }
    let mut out = Vec::new();
    for i in lo[0]..hi[0] {
        for j in lo[1]..hi[1] {
            for k in lo[2]..hi[2] {
                out.push([i, j, k]);
            }
        }
    }
    out
}

fn scatter(rng: &mut ChaCha8Rng, dims: [usize; 3], n: usize) -> Vec<[usize; 3]> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..n {
        let v = [
            rng.gen_range(0..dims[0]),
            rng.gen_range(0..dims[1]),
            rng.gen_range(0..dims[2]),
        ];
        if seen.insert(v) {
            out.push(v);
        }
    }
    out
}

fn structure(name: &str, role: StructureRole, voxels: Vec<[usize; 3]>) -> Structure {
    Structure {
        name: name.to_string(),
        color: "green".to_string(),
        role,
        voxels,
    }
}

/// A plan with a target box near prescription dose, two organ boxes, a
/// scattered structure and an empty one.
pub fn random_plan(seed: u64) -> PlanModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [
        rng.gen_range(2..=MAX_EDGE),
        rng.gen_range(2..=MAX_EDGE),
        rng.gen_range(2..=MAX_EDGE),
    ];
    let fractions = rng.gen_range(20..45u32);
    let per = [1.8, 2.0, 2.5][rng.gen_range(0..3)];
    let rx = f64::from(fractions) * per;
    let ptv = random_box(&mut rng, dims);
    let n = dims.iter().product::<usize>();
    let mut values: Vec<f64> = (0..n)
        .map(|_| eighth(rng.gen_range(0.0..0.9) * rx))
        .collect();
    let index = |[i, j, k]: [usize; 3]| (i * dims[1] + j) * dims[2] + k;
    for v in &ptv {
        values[index(*v)] = eighth(rx * rng.gen_range(0.90..1.12));
    }
    let hot_n = rng.gen_range(0..20);
    let hot = scatter(&mut rng, dims, hot_n);
    for v in &hot {
        values[index(*v)] = eighth(rx * rng.gen_range(1.0..1.2));
    }
    let scatter_n = rng.gen_range(1..400);
    let scattered = scatter(&mut rng, dims, scatter_n);
    PlanModel {
        prescription: Prescription {
            technique: Technique::ThreeDCrt,
            total_dose_gy: rx,
            fractions,
            dose_per_fraction_gy: per,
        },
        grid: DoseGrid {
            dims,
            voxel_size_mm: [
                [1.0, 2.0, 2.5][rng.gen_range(0..3)],
                [2.0, 3.0, 5.0][rng.gen_range(0..3)],
                [2.5, 3.0, 5.0][rng.gen_range(0..3)],
            ],
            values,
        },
        structures: vec![
            structure("PTV", StructureRole::Ptv, ptv),
            structure("Rectum", StructureRole::Oar, random_box(&mut rng, dims)),
            structure("Bladder", StructureRole::Oar, random_box(&mut rng, dims)),
            structure("Scatter", StructureRole::Other, scattered),
            structure("Empty", StructureRole::Other, Vec::new()),
        ],
    }
}

pub fn doses(plan: &PlanModel, name: &str) -> Option<Vec<f64>> {
    let s = plan.structures.iter().find(|s| s.name == name)?;
    if s.voxels.is_empty() {
        return None;
    }
    let [_, ny, nz] = plan.grid.dims;
    Some(
        s.voxels
            .iter()
            .map(|[i, j, k]| plan.grid.values[(i * ny + j) * nz + k])
            .collect(),
    )
}

pub fn v_count(doses: &[f64], threshold_gy: f64) -> usize {
    let mut c = 0;
    for d in doses {
        if *d >= threshold_gy {
            c += 1;
        }
    }
    c
}

pub fn v_percent(doses: &[f64], threshold_gy: f64) -> f64 {
    100.0 * v_count(doses, threshold_gy) as f64 / doses.len() as f64
}

pub fn v_cc(plan: &PlanModel, doses: &[f64], threshold_gy: f64) -> f64 {
    let [a, b, c] = plan.grid.voxel_size_mm;
    v_count(doses, threshold_gy) as f64 * (a * b * c / 1000.0)
}

/// The largest dose level still covering at least `p`% of the volume.
pub fn d_at(doses: &[f64], p: f64) -> f64 {
    let mut asc = doses.to_vec();
    asc.sort_by(f64::total_cmp);
    let n = asc.len();
    let mut best = f64::NEG_INFINITY;
    let mut first = 0;
    for i in 0..n {
        if asc[i] != asc[first] {
            first = i;
        }
        // Voxels from `first` upward all receive at least asc[i].
        if 100.0 * (n - first) as f64 >= p * n as f64 {
            best = asc[i];
        }
    }
    best
}

pub fn mean(doses: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in doses {
        s += d;
    }
    s / doses.len() as f64
}

pub fn max(doses: &[f64]) -> f64 {
    let mut m = doses[0];
    for d in doses {
        if *d > m {
            m = *d;
        }
    }
    m
}

pub fn ci(plan: &PlanModel) -> Option<f64> {
    let ptv = doses(plan, "PTV")?;
    let rx = plan.prescription.total_dose_gy;
    let iso = plan.grid.values.iter().filter(|d| **d >= rx).count();
    Some(iso as f64 / ptv.len() as f64)
}

pub fn hi(plan: &PlanModel) -> Option<f64> {
    let ptv = doses(plan, "PTV")?;
    let d5 = d_at(&ptv, 5.0);
    (d5 != 0.0).then(|| d_at(&ptv, 95.0) / d5)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Face-connected components via union-find over forward neighbours.
pub fn components(dims: [usize; 3], mask: &[bool]) -> usize {
    let [nx, ny, nz] = dims;
    let mut uf = UnionFind((0..mask.len()).collect());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let a = (i * ny + j) * nz + k;
                if !mask[a] {
                    continue;
                }
                if i + 1 < nx && mask[a + ny * nz] {
                    uf.union(a, a + ny * nz);
                }
                if j + 1 < ny && mask[a + nz] {
                    uf.union(a, a + nz);
                }
                if k + 1 < nz && mask[a + 1] {
                    uf.union(a, a + 1);
                }
            }
        }
    }
    let mut roots = BTreeSet::new();
    for (a, m) in mask.iter().enumerate() {
        if *m {
            roots.insert(uf.find(a));
        }
    }
    roots.len()
}

pub fn cold_spots(plan: &PlanModel) -> Option<usize> {
    doses(plan, "PTV")?;
    let [_, ny, nz] = plan.grid.dims;
    let limit = plan.prescription.total_dose_gy * 0.95;
    let mut mask = vec![false; plan.grid.values.len()];
    let ptv = plan.structures.iter().find(|s| s.name == "PTV")?;
    for [i, j, k] in &ptv.voxels {
        let a = (i * ny + j) * nz + k;
        mask[a] = plan.grid.values[a] <= limit;
    }
    Some(components(plan.grid.dims, &mask))
}

pub fn hot_spots(plan: &PlanModel) -> Option<usize> {
    doses(plan, "PTV")?;
    let limit = plan.prescription.total_dose_gy * 1.07;
    let mask: Vec<bool> = plan.grid.values.iter().map(|d| *d > limit).collect();
    Some(components(plan.grid.dims, &mask))
}

const STRUCTURES: [&str; 5] = ["PTV", "Rectum", "Bladder", "Scatter", "Empty"];
const VOLUME_LEVELS: [f64; 7] = [0.5, 5.0, 33.3, 50.0, 95.0, 98.0, 100.0];

fn same<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, oracle {want:?}"))
    }
}

/// Compares every metric of `plan` with the oracle; returns how many values
/// were compared.
pub fn check_plan(plan: &PlanModel) -> Result<usize, String> {
    use rtqa_core::dosimetry as dm;
    use rtqa_core::rulelang::{Level, OutputUnit};
    let rx = plan.prescription.total_dose_gy;
    let mut checked = 0;
    for name in STRUCTURES
        .iter()
        .copied()
        .filter(|n| plan.structures.iter().any(|s| s.name == *n))
    {
        let Some(d) = doses(plan, name) else {
            if dm::mean_dose(plan, name).is_ok() || dm::d_metric(plan, name, 50.0).is_ok() {
                return Err(format!("{name}: metric on an empty structure succeeded"));
            }
            continue;
        };
        for pct in [50.0, 95.0, 100.0, 107.0] {
            let gy = rx * (pct / 100.0);
            same(
                &format!("{name} V{pct}%rx"),
                dm::v_metric(plan, name, Level::PercentRx(pct), OutputUnit::Percent).ok(),
                Some(v_percent(&d, gy)),
            )?;
            same(
                &format!("{name} V{gy}Gy cc"),
                dm::v_metric(plan, name, Level::Gy(gy), OutputUnit::Cc).ok(),
                Some(v_cc(plan, &d, gy)),
            )?;
            checked += 2;
        }
        for p in VOLUME_LEVELS {
            same(
                &format!("{name} D{p}"),
                dm::d_metric(plan, name, p).ok(),
                Some(d_at(&d, p)),
            )?;
            checked += 1;
        }
        same(
            &format!("{name} mean"),
            dm::mean_dose(plan, name).ok(),
            Some(mean(&d)),
        )?;
        same(
            &format!("{name} max"),
            dm::max_point_dose(plan, name).ok(),
            Some(max(&d)),
        )?;
        checked += 2;
    }
    same("CI", dm::conformity_index(plan).ok(), ci(plan))?;
    same("HI", dm::homogeneity_index(plan).ok(), hi(plan))?;
    same(
        "cold spots",
        dm::count_cold_spots(plan).ok(),
        cold_spots(plan),
    )?;
    same("hot spots", dm::count_hot_spots(plan).ok(), hot_spots(plan))?;
    Ok(checked + 4)
}
