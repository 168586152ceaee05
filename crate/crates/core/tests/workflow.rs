use std::f64::consts::PI;

use barrier_core::closedloop::{run_closed_loop, ControllerConfig, Disturbance, PlantPerturbation};
use barrier_core::drive::DriveParams;
use barrier_core::lmisyn::{build_error_model, synthesize, RegionSpec};
use barrier_core::plant::PlantParams;
use barrier_core::trajopt::{solve_ocp, OcpConfig, PlannedTrajectory};

#[test]
fn plan_tune_and_track_from_a_saved_plan() {
    let p = PlantParams::default();
    let drv = DriveParams::default();
    let plan = solve_ocp(&p, &drv, &OcpConfig::with_intervals(100)).unwrap();
    assert!(plan.converged);

    let mut csv = Vec::new();
    plan.write_csv(&mut csv).unwrap();
    let loaded = PlannedTrajectory::read_csv(csv.as_slice()).unwrap();

    let model = build_error_model(&p, p.mech.theta_e).unwrap();
    let gains = synthesize(&model, &RegionSpec { alpha: 10.0, rho: Some(60.0), theta: PI / 6.0 }).unwrap();
    let ctrl = ControllerConfig { k: gains.k.unwrap(), ..ControllerConfig::default() };
    let none = PlantPerturbation::default();
    let direct = run_closed_loop(&p, &drv, &plan, &ctrl, &Disturbance::None, &none).unwrap();
    let replayed = run_closed_loop(&p, &drv, &loaded, &ctrl, &Disturbance::None, &none).unwrap();
    assert_eq!(direct.trajectory, replayed.trajectory);
    assert!(direct.metrics.nrmse <= 0.02);
    assert!(direct.metrics.terminal_theta_error.abs() <= 0.01);
}

#[test]
fn project_documents_round_trip() {
    let p = PlantParams::default();
    let text = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<PlantParams>(&text).unwrap(), p);
    let cfg = OcpConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<OcpConfig>(&text).unwrap(), cfg);
    assert!(serde_json::from_str::<OcpConfig>(r#"{"N": 10, "bogus": 1}"#).is_err());
}
