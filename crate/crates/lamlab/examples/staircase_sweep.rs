//! End-to-end tour: take the 4-point staircase set (level 3), certify its
//! level with a witness tree, then sweep three mesh sizes and print the
//! fitted convergence rate.

use lamlab::fem::Polygon;
use lamlab::harness::{emit_csv, sweep, CaseOptions};
use lamlab::lamhull::{extract_witness, staircase};

fn main() -> lamlab::Result<()> {
    let k = staircase(3)?;
    let tree = extract_witness(&k, 12)?;
    tree.verify()?;
    println!(
        "level {} certified by {} leaves\n",
        tree.level,
        tree.unique_leaves().len()
    );

    let omega = Polygon::rectangle(0.0, 0.0, 1.0, 1.0)?;
    let opts = CaseOptions { alpha: Some(0.25), ..CaseOptions::default() };
    let h_list: Vec<f64> = (8..=10).map(|e| 0.5f64.powi(e)).collect();
    let out = sweep(&k, &omega, &h_list, &opts, 1)?;

    print!("{}", emit_csv(&out.reports, true));
    match out.fit.slope {
        Some(s) => println!("\nslope {s:.3} (target {})", out.fit.target_rate),
        None => println!("\ntoo few points for a fit"),
    }
    Ok(())
}
