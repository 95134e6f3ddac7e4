#![allow(dead_code)]

use targetkit_core::{ArmSet, ExperimentTable, Matrix, TableParts};

/// Two-arm table with `successes/n` binary outcomes per arm and one
/// constant covariate.
pub fn count_table(treat: (usize, usize), control: (usize, usize)) -> ExperimentTable {
    let (st, nt) = treat;
    let (sc, nc) = control;
    let mut arm = Vec::new();
    let mut y = Vec::new();
    for i in 0..nt {
        arm.push(1);
        y.push(f64::from(u8::from(i < st)));
    }
    for i in 0..nc {
        arm.push(0);
        y.push(f64::from(u8::from(i < sc)));
    }
    let n = arm.len();
    let arms = ArmSet::new(["control", "treated"], "control").unwrap();
    ExperimentTable::new(TableParts::new(
        Matrix::filled(n, 1, 1.0),
        vec!["one".into()],
        arms,
        arm,
        y,
    ))
    .unwrap()
}

/// Table from explicit columns.
pub fn table_from(
    x: Matrix,
    names: &[&str],
    arms: &[&str],
    arm: Vec<usize>,
    y: Vec<f64>,
) -> ExperimentTable {
    let arms = ArmSet::new(arms.iter().copied(), arms[0]).unwrap();
    let names = names.iter().map(|s| s.to_string()).collect();
    ExperimentTable::new(TableParts::new(x, names, arms, arm, y)).unwrap()
}
