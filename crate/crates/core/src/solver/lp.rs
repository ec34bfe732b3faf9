//! Export to CPLEX LP format for cross-checking with external MIQP solvers.
//!
//! Variable names: `b<j>` coefficients (`b0` is the intercept when present),
//! `f<i>` shifts, `r<i>` residuals, `zb<j>` / `zf<i>` indicators, all
//! 0-based. Sections appear in the order objective, residual definitions,
//! indicator links, cardinality rows, ridge row, bounds, binaries. Numbers are
//! written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::model::SfsodProblem;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn signed(v: f64, name: &str) -> String {
    if v < 0.0 {
        format!(" - {} {name}", num(-v))
    } else {
        format!(" + {} {name}", num(v))
    }
}

/// Renders `problem` as an LP-format model.
///
/// With big-M vectors the indicator links are linear box rows
/// `−M z ≤ v ≤ M z`; without them they are written as indicator constraints
/// `z = 0 -> v = 0`.
pub fn export_lp(problem: &SfsodProblem) -> String {
    let n = problem.n();
    let p = problem.p();
    let data = &problem.data;
    let off = usize::from(problem.intercept());
    let mut s = String::new();
    let _ = writeln!(s, "\\ sparse trimmed regression: n = {n}, p = {p}, k_p = {}, k_n = {}", problem.k_p, problem.k_n);
    let _ = writeln!(s, "Minimize");
    // LP quadratic objectives are written as [ ... ] / 2.
    let w = 2.0 / n as f64;
    let _ = write!(s, " obj: [");
    for i in 0..n {
        let _ = write!(s, "{} {} r{i} ^ 2", if i == 0 { "" } else { " +" }, num(w));
    }
    let _ = writeln!(s, " ] / 2");

    let _ = writeln!(s, "Subject To");
    for i in 0..n {
        let _ = write!(s, " res{i}: r{i}");
        for j in 0..p {
            let v = data.x().get(i, j);
            if v != 0.0 {
                s.push_str(&signed(v, &format!("b{j}")));
            }
        }
        let _ = writeln!(s, " + f{i} = {}", num(data.y()[i]));
    }
    match (&problem.bigm_beta, &problem.bigm_phi) {
        (Some(mb), Some(mp)) => {
            for j in off..p {
                let _ = writeln!(s, " ubb{j}: b{j} - {} zb{j} <= 0", num(mb[j]));
                let _ = writeln!(s, " lbb{j}: b{j} + {} zb{j} >= 0", num(mb[j]));
            }
            for i in 0..n {
                let _ = writeln!(s, " ubf{i}: f{i} - {} zf{i} <= 0", num(mp[i]));
                let _ = writeln!(s, " lbf{i}: f{i} + {} zf{i} >= 0", num(mp[i]));
            }
        }
        _ => {
            for j in off..p {
                let _ = writeln!(s, " indb{j}: zb{j} = 0 -> b{j} = 0");
            }
            for i in 0..n {
                let _ = writeln!(s, " indf{i}: zf{i} = 0 -> f{i} = 0");
            }
        }
    }
    let _ = write!(s, " cardb:");
    for j in off..p {
        let _ = write!(s, " + zb{j}");
    }
    let _ = writeln!(s, " <= {}", problem.k_p);
    let _ = write!(s, " cardf:");
    for i in 0..n {
        let _ = write!(s, " + zf{i}");
    }
    let _ = writeln!(s, " <= {}", problem.k_n);
    if problem.ridge_active() && p > off {
        let _ = write!(s, " ridge: [");
        for j in off..p {
            let _ = write!(s, "{} b{j} ^ 2", if j == off { "" } else { " +" });
        }
        let _ = writeln!(s, " ] <= {}", num(problem.lambda));
    }

    let _ = writeln!(s, "Bounds");
    for j in 0..p {
        let _ = writeln!(s, " b{j} free");
    }
    for i in 0..n {
        let _ = writeln!(s, " f{i} free");
        let _ = writeln!(s, " r{i} free");
    }
    let _ = writeln!(s, "Binaries");
    for j in off..p {
        let _ = writeln!(s, " zb{j}");
    }
    for i in 0..n {
        let _ = writeln!(s, " zf{i}");
    }
    let _ = writeln!(s, "End");
    s
}

pub fn write_lp(problem: &SfsodProblem, path: &Path) -> Result<()> {
    std::fs::write(path, export_lp(problem))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::Dataset;

    #[test]
    fn sections_and_precision() {
        let x = Matrix::from_rows(&[vec![1.0, 0.1], vec![1.0, -2.0], vec![1.0, 3.0], vec![1.0, 0.7]]);
        let pb = SfsodProblem::new(Dataset::new(vec![1.0, 2.0, 1.0 / 3.0, 4.0], x, true).unwrap(), 1, 1)
            .unwrap()
            .with_lambda(2.0)
            .unwrap()
            .with_bigm(vec![5.0, 5.0], vec![9.0; 4])
            .unwrap();
        let lp = export_lp(&pb);
        let order = ["Minimize", "Subject To", "Bounds", "Binaries", "End"];
        let pos: Vec<usize> = order.iter().map(|k| lp.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(lp.contains("3.3333333333333331e-1"));
        assert!(lp.contains(" cardb: + zb1 <= 1"));
        assert!(lp.contains("ridge: [ b1 ^ 2 ] <= 2.0000000000000000e0"));
        assert!(!lp.contains("zb0"));
    }
}
