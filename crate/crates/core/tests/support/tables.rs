//! Random decision tables and a 2^n enumeration oracle.

use proptest::prelude::*;
use rtqa_core::rulelang::{ConditionEntry, DecisionTable, Expr, TableColumn};

pub const MAX_CONDITIONS: usize = 10;

/// Columns obtained by repeatedly splitting a don't-care entry into a T and an
/// F column (a partition of the space), then dropping some columns and adding
/// a few arbitrary ones so that gaps and overlaps both occur.
pub fn table() -> impl Strategy<Value = DecisionTable> {
    (0..=MAX_CONDITIONS, any::<u64>(), 0..3usize, 0..3usize).prop_map(|(n, seed, drops, extras)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![vec![ConditionEntry::DontCare; n]];
        let splits = rng.gen_range(0..24);
        for _ in 0..splits {
            let c = rng.gen_range(0..cols.len());
            let free: Vec<usize> = (0..n)
                .filter(|i| cols[c][*i] == ConditionEntry::DontCare)
                .collect();
            if free.is_empty() {
                continue;
            }
            let at = free[rng.gen_range(0..free.len())];
            let mut other = cols[c].clone();
            cols[c][at] = ConditionEntry::True;
            other[at] = ConditionEntry::False;
            cols.push(other);
        }
        for _ in 0..drops {
            if cols.len() > 1 {
                let c = rng.gen_range(0..cols.len());
                cols.remove(c);
            }
        }
        for _ in 0..extras.saturating_sub(1) {
            let col = (0..n)
                .map(|_| match rng.gen_range(0..3) {
                    0 => ConditionEntry::True,
                    1 => ConditionEntry::False,
                    _ => ConditionEntry::DontCare,
                })
                .collect();
            let at = rng.gen_range(0..=cols.len());
            cols.insert(at, col);
        }
        DecisionTable {
            header: None,
            data: Vec::new(),
            conditions: (0..n)
                .map(|i| (format!("c{i}"), Expr::var(&format!("c{i}"))))
                .collect(),
            actions: Vec::new(),
            columns: cols
                .into_iter()
                .map(|condition_entries| TableColumn {
                    condition_entries,
                    action_entries: Vec::new(),
                })
                .collect(),
        }
    })
}

/// Every truth vector over `n` conditions, T before F at each position.
pub fn all_vectors(n: usize) -> Vec<Vec<bool>> {
    fn go(prefix: &mut Vec<bool>, n: usize, out: &mut Vec<Vec<bool>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in [true, false] {
            prefix.push(b);
            go(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), n, &mut out);
    out
}

fn covers(col: &TableColumn, v: &[bool]) -> bool {
    col.condition_entries.iter().zip(v).all(|(e, b)| match e {
        ConditionEntry::True => *b,
        ConditionEntry::False => !*b,
        ConditionEntry::DontCare => true,
    })
}

#[derive(Debug, PartialEq)]
pub enum Expected {
    Overlap {
        vector: Vec<bool>,
        columns: Vec<usize>,
    },
    Complete {
        missing: Vec<Vec<bool>>,
    },
}

pub fn enumerate(table: &DecisionTable) -> Expected {
    let mut missing = Vec::new();
    for v in all_vectors(table.conditions.len()) {
        let hits: Vec<usize> = (0..table.columns.len())
            .filter(|c| covers(&table.columns[*c], &v))
            .collect();
        match hits.len() {
            0 => missing.push(v),
            1 => {}
            _ => {
                return Expected::Overlap {
                    vector: v,
                    columns: hits,
                }
            }
        }
    }
    Expected::Complete { missing }
}
