//! Physics acceptance suite: one line per criterion, then a single verdict.

use inhomo::acceptance::{run, CRITERIA};
use inhomo::ensemble::QuadratureGrid;

#[test]
fn acceptance_criteria() {
    let grid = QuadratureGrid::default();
    let reports = run(&CRITERIA, &grid, |r| println!("{r}"));
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed", reports.len() - failed.len(), reports.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
