// Fixture plans for the sample prostate rulepack. Shared by the fixture
// generator example and the tests that check the committed JSON.

use rtqa_core::dosimetry::{
    DoseGrid, PlanModel, Prescription, Structure, StructureRole, Technique,
};

pub const N: usize = 24;
pub const PTV_DOSE: f64 = 80.0;
pub const RING_DOSE: f64 = 79.5;
pub const COLD_DOSE: f64 = 71.28;
pub const BACKGROUND: f64 = 10.0;

type Voxel = [usize; 3];

fn cube(lo: Voxel, size: [usize; 3]) -> Vec<Voxel> {
    let mut out = Vec::new();
    for i in lo[0]..lo[0] + size[0] {
        for j in lo[1]..lo[1] + size[1] {
            for k in lo[2]..lo[2] + size[2] {
                out.push([i, j, k]);
            }
        }
    }
    out
}

fn structure(name: &str, color: &str, role: StructureRole, voxels: Vec<Voxel>) -> Structure {
    Structure {
        name: name.into(),
        color: color.into(),
        role,
        voxels,
    }
}

/// `failing` widens the prescription isodose to 1.5x the PTV and puts one
/// PTV voxel at 90% of the prescription.
pub fn prostate_plan(failing: bool) -> PlanModel {
    let idx = |[i, j, k]: Voxel| (i * N + j) * N + k;
    let mut values = vec![BACKGROUND; N * N * N];
    let mut set = |voxels: &[Voxel], dose: f64| {
        for v in voxels {
            values[idx(*v)] = dose;
        }
    };

    let ptv = cube([8, 8, 8], [8, 8, 8]);
    let ctv = cube([9, 9, 9], [6, 6, 6]);
    let gtv = cube([10, 10, 10], [4, 4, 4]);
    let rectum = cube([2, 10, 10], [4, 4, 4]);
    let bladder = cube([18, 8, 8], [4, 4, 4]);
    let small_bowel = cube([9, 18, 0], [6, 6, 6]);
    let penile_bulb = cube([18, 0, 0], [3, 3, 3]);

    set(&rectum, 40.0);
    set(&bladder, 30.0);
    set(&bladder[..6], 65.0);
    set(&small_bowel, 20.0);
    set(&small_bowel[..40], 50.0);
    set(&penile_bulb, 40.0);
    set(&ptv, PTV_DOSE);

    // Slabs of 64 voxels touching the PTV faces, inside the prescription isodose.
    let mut ring = cube([7, 8, 8], [1, 8, 8]);
    ring.extend(cube([16, 8, 8], [1, 8, 8]));
    if failing {
        ring.extend(cube([8, 7, 8], [8, 1, 8]));
        ring.extend(cube([8, 16, 8], [8, 1, 8]));
        // Replaces the cold voxel's share of the isodose volume: 768 / 512.
        ring.push([8, 8, 7]);
    }
    set(&ring, RING_DOSE);
    if failing {
        set(&[[11, 11, 11]], COLD_DOSE);
    }

    PlanModel {
        prescription: Prescription {
            technique: Technique::ThreeDCrt,
            total_dose_gy: 79.2,
            fractions: 44,
            dose_per_fraction_gy: 1.8,
        },
        grid: DoseGrid {
            dims: [N, N, N],
            voxel_size_mm: [5.0, 5.0, 5.0],
            values,
        },
        structures: vec![
            structure("PTV", "orange", StructureRole::Ptv, ptv),
            structure(
                "Clinical Target Volume",
                "Dark Blue",
                StructureRole::Ctv,
                ctv,
            ),
            structure("GTV", "red", StructureRole::Gtv, gtv),
            structure("Rectum", "brown", StructureRole::Oar, rectum),
            structure("Urinary Bladder", "yellow", StructureRole::Oar, bladder),
            structure("Small Bowel", "green", StructureRole::Oar, small_bowel),
            structure("Penile Bulb", "cyan", StructureRole::Oar, penile_bulb),
        ],
    }
}

pub fn to_json(plan: &PlanModel) -> String {
    serde_json::to_string(plan).expect("plan serializes") + "\n"
}
