use uhgf_sim::report::to_json_string;
use uhgf_sim::series::{generate_series, SeriesSpec, SeriesSummary};

#[test]
fn default_series_matches_golden_summary() {
    let spec = SeriesSpec::default();
    let series = generate_series(&spec).unwrap();
    let got = to_json_string(&SeriesSummary::new(&spec, &series));
    assert_eq!(got, include_str!("golden/default_series_summary.json"));
}

#[test]
fn default_series_shape() {
    let series = generate_series(&SeriesSpec::default()).unwrap();
    assert_eq!(series.len(), 320);
    let truth = series.truth.as_ref().unwrap();
    let mut levels: Vec<f64> = truth.clone();
    levels.dedup();
    assert_eq!(levels, vec![0.0, 100.0, -50.0, 50.0]);
}
