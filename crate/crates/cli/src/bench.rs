//! Serial-chain benchmark sweeps: flop counts (the comparable metric) and
//! informational wall times per method and chain length, emitted as CSV.
//!
//! Chains are identical unit-mass, unit-length revolute-z links; the
//! generic load-cell scenario uses the feet variant (prismatic-z extremal
//! links carrying the load cells and ankle torque sensors). Flop columns
//! are deterministic; wall time is wall time.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Result};

use dynlu::assembly::MeasureKind;
use dynlu::classic::{count_flops_classic, ClassicAlgo};
use dynlu::estimate::{channel_key, execute, plan, InputValues, Problem};
use dynlu::flops::FlopCount;
use dynlu::model::builders::{serial_chain, serial_chain_with_feet};
use dynlu::model::KinematicTree;
use dynlu::sparse::{dense_lu_flops, dense_solve_flops};
use dynlu::spatial::{SpatialVec, Vec3};
use dynlu::MeasurementSpec;

pub const CSV_HEADER: &str = "n_links,method,mul,add,div,total,wall_ns";

/// Methods in output order.
pub const ALL_METHODS: &[&str] = &[
    "rnea",
    "aba",
    "lu-id",
    "lu-fd",
    "lu-generic-loadcell",
    "dense-inversion",
    "dense-generic-loadcell",
];

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub n_links: usize,
    pub method: &'static str,
    pub flops: FlopCount,
    pub wall_ns: u128,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.n_links,
            self.method,
            self.flops.csv_fields(),
            self.wall_ns
        )
    }
}

/// Deterministic joint state used by the online solves.
fn bench_state(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let q: Vec<f64> = (1..=n).map(|i| 0.4 + 0.25 * (1.7 * i as f64).sin()).collect();
    let qd: Vec<f64> = (1..=n).map(|i| 0.3 * (0.9 * i as f64).cos()).collect();
    let qdd: Vec<f64> = (1..=n).map(|i| 0.2 * (0.5 * i as f64).sin() - 0.1).collect();
    (q, qd, qdd)
}

fn timed_execute(
    tree: &KinematicTree,
    problem: Problem,
    q: &[f64],
    qd: &[f64],
    inputs: &InputValues,
) -> Result<(FlopCount, u128)> {
    let solver = plan(tree, problem)?;
    let start = Instant::now();
    let out = execute(&solver, q, qd, inputs)?;
    Ok((out.flops, start.elapsed().as_nanos()))
}

fn record_for(method: &'static str, n: usize) -> Result<Option<BenchRecord>> {
    let dense_dim = (20 * n) as u64;
    let (q, qd, qdd) = bench_state(n);
    let make = |flops, wall_ns| {
        Ok(Some(BenchRecord {
            n_links: n,
            method,
            flops,
            wall_ns,
        }))
    };
    match method {
        "rnea" => {
            let tree = serial_chain(n);
            let start = Instant::now();
            let flops = count_flops_classic(ClassicAlgo::Rnea, &tree);
            make(flops, start.elapsed().as_nanos())
        }
        "aba" => {
            let tree = serial_chain(n);
            let start = Instant::now();
            let flops = count_flops_classic(ClassicAlgo::Aba, &tree);
            make(flops, start.elapsed().as_nanos())
        }
        "lu-id" => {
            let tree = serial_chain(n);
            let inputs = InputValues {
                qdd: qdd.clone(),
                tau: vec![0.0; n],
                fx: vec![SpatialVec::zero(); n],
                channels: BTreeMap::new(),
            };
            let (flops, wall) = timed_execute(&tree, Problem::Id, &q, &qd, &inputs)?;
            make(flops, wall)
        }
        "lu-fd" => {
            let tree = serial_chain(n);
            let fx = vec![SpatialVec::zero(); n];
            let truth = dynlu::classic::rnea(&tree, &q, &qd, &qdd, &fx)?;
            let inputs = InputValues {
                qdd: vec![0.0; n],
                tau: truth.tau,
                fx,
                channels: BTreeMap::new(),
            };
            let (flops, wall) = timed_execute(&tree, Problem::Fd, &q, &qd, &inputs)?;
            make(flops, wall)
        }
        "lu-generic-loadcell" => {
            if n < 2 {
                return Ok(None);
            }
            let tree = serial_chain_with_feet(n);
            let mut fx = vec![SpatialVec::zero(); n];
            fx[0] = SpatialVec::new(Vec3::new(0.2, -0.1, 0.3), Vec3::new(0.5, 0.2, 9.0));
            fx[n - 1] = SpatialVec::new(Vec3::new(-0.3, 0.2, 0.1), Vec3::new(-0.4, 0.3, 7.0));
            let truth = dynlu::classic::rnea(&tree, &q, &qd, &qdd, &fx)?;
            let spec = MeasurementSpec::two_feet(n, MeasureKind::Slippery);
            let mut channels = BTreeMap::new();
            let y = dynlu::assembly::slippery_y();
            for foot in [1, n] {
                let wrench =
                    nalgebra::DVector::from_iterator(6, fx[foot - 1].to_vec6().iter().copied());
                channels.insert(channel_key(MeasureKind::Slippery, foot), y.transpose() * wrench);
            }
            let inputs = InputValues {
                qdd: qdd.clone(),
                tau: truth.tau,
                fx,
                channels,
            };
            let (flops, wall) =
                timed_execute(&tree, Problem::Generic(spec), &q, &qd, &inputs)?;
            make(flops, wall)
        }
        "dense-inversion" | "dense-generic-loadcell" => {
            if method == "dense-generic-loadcell" && n < 2 {
                return Ok(None);
            }
            // dense LU + substitution on the same square system dimension;
            // closed-form counts of this kernel, verified against
            // instrumented runs
            make(dense_lu_flops(dense_dim) + dense_solve_flops(dense_dim), 0)
        }
        other => bail!("unknown bench method `{other}`"),
    }
}

/// Run the sweep for `n = 1..=n_max` over the requested methods, in
/// deterministic `(n, method)` order.
pub fn run_bench(methods: &[String], n_max: usize) -> Result<Vec<BenchRecord>> {
    let mut order: Vec<&'static str> = Vec::new();
    for m in methods {
        match ALL_METHODS.iter().find(|k| *k == m) {
            Some(k) => order.push(k),
            None => bail!("unknown method `{m}` (known: {})", ALL_METHODS.join(", ")),
        }
    }
    let mut records = Vec::new();
    for n in 1..=n_max {
        for method in &order {
            if let Some(rec) = record_for(method, n)? {
                records.push(rec);
            }
        }
    }
    Ok(records)
}

pub fn write_csv<W: std::io::Write>(records: &[BenchRecord], out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for rec in records {
        writeln!(out, "{}", rec.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flop_columns_are_deterministic() {
        let methods: Vec<String> = ALL_METHODS.iter().map(|s| s.to_string()).collect();
        let a = run_bench(&methods, 4).unwrap();
        let b = run_bench(&methods, 4).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.n_links, y.n_links);
            assert_eq!(x.method, y.method);
            assert_eq!(x.flops, y.flops);
        }
    }

    #[test]
    fn totals_are_nondecreasing_in_chain_length() {
        let methods: Vec<String> = ALL_METHODS.iter().map(|s| s.to_string()).collect();
        let records = run_bench(&methods, 16).unwrap();
        for method in ALL_METHODS {
            let totals: Vec<u64> = records
                .iter()
                .filter(|r| r.method == *method)
                .map(|r| r.flops.total())
                .collect();
            for w in totals.windows(2) {
                assert!(w[1] >= w[0], "{method}: {w:?}");
            }
        }
    }

    #[test]
    fn csv_header_is_stable() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n_links,method,mul,add,div,total,wall_ns\n");
    }
}
