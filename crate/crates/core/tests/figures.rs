use inhomo::ensemble::QuadratureGrid;
use inhomo::optimize::{figure_data, reproduce_figure, FigureId, FigureManifest};

fn grid() -> QuadratureGrid {
    QuadratureGrid::new(301, 5.0).unwrap()
}

#[test]
fn recovery_lifts_the_two_photon_peak_past_the_limit() {
    for id in [FigureId::Fig2, FigureId::Fig5] {
        let data = figure_data(id, &grid()).unwrap();
        let s = &data.summary;
        assert_eq!(s["solves_healthy"], true);
        let on = s["beta_recovery_on"].as_f64().unwrap();
        let off = s["beta_recovery_off"].as_f64().unwrap();
        assert!(off < 1.0 && on > 1.0, "{id}: on {on}, off {off}");

        let t = &data.tables[0].1;
        let limit = t.column("inhomogeneous_limit").unwrap()[0];
        let max = |c: &str| t.column(c).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert!(max("recovery_on") > limit);
        assert!(max("recovery_off") < max("bare"));
    }
}

#[test]
fn single_absorbers_stay_below_their_ensemble_bound() {
    let data = figure_data(FigureId::Fig1bd, &grid()).unwrap();
    let names: Vec<&str> = data.tables.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["fig1b_absorbers.csv", "fig1b_ensemble.csv", "fig1d_absorbers.csv", "fig1d_ensemble.csv"]);
    assert!(data.summary["fig1b_max_over_limit"].as_f64().unwrap() < 1.0);
    assert!(data.summary["fig1d_max_over_limit"].as_f64().unwrap() > 1.0);
}

#[test]
fn manifest_lists_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = reproduce_figure(FigureId::Fig3b, dir.path(), &QuadratureGrid::new(101, 5.0).unwrap()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("fig3b_manifest.json")).unwrap();
    let back: FigureManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(m.grid_nodes, 101);
    for f in &m.files {
        let csv = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(csv.lines().count() > 2);
    }
}
