//! Project configuration: built-in defaults, an optional project file whose
//! sections are inline objects or paths to JSON files, `--set` overrides on
//! dotted paths, and the hash that names every output directory.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use barrier_core::closedloop::{ControllerConfig, Disturbance, PlantPerturbation};
use barrier_core::drive::DriveParams;
use barrier_core::lmisyn::{ErrorModel, RegionSpec};
use barrier_core::plant::PlantParams;
use barrier_core::trajopt::OcpConfig;
use barrier_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Sections whose value may be given as a path to a separate JSON file.
const FILE_SECTIONS: [&str; 11] = [
    "plant", "drive", "ocp", "region", "controller", "sweep", "tune", "simulate", "identify",
    "verify", "closedloop",
];

/// Keys holding paths, resolved against the project file's directory.
const PATH_KEYS: [&str; 4] = ["output_dir", "closedloop.plan", "closedloop.gains", "identify.log"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Duty,
    Voltage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub tf: f64,
    pub t_ctrl: f64,
    pub input: InputKind,
    /// Duty cycle or voltage held over the run.
    pub level: f64,
    /// Initial load angle (rad).
    pub theta0: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { tf: 2.0, t_ctrl: 0.01, input: InputKind::Duty, level: 0.3, theta0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub t_s: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub n: usize,
    pub amplitude: f64,
    pub max_run: usize,
    pub noise_sigma: f64,
    /// Duty-cycle log for the friction/damping calibration.
    pub log: Option<PathBuf>,
    pub grid_rel: f64,
    pub grid_n: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            t_s: 1e-3,
            delta: 2e-4,
            n: 2000,
            amplitude: 12.0,
            max_run: 20,
            noise_sigma: 0.0,
            log: None,
            grid_rel: 0.5,
            grid_n: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub tol: f64,
    pub max_boxes: Option<u64>,
    /// Side of the dense cross-check grid; 0 skips it.
    pub grid: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { tol: 1e-4, max_boxes: None, grid: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { alphas: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0], thetas: vec![PI / 6.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Load angle where the error model is linearized; `θ_e` when absent.
    pub theta_lin: Option<f64>,
    /// Explicit error model instead of the one built from the plant.
    pub model: Option<ErrorModel>,
    pub vertices: Option<Vec<ErrorModel>>,
    /// Relative `±` polytope on `(a22, b2)` when no vertices are listed; 0 disables it.
    pub robust_rel: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { theta_lin: None, model: None, vertices: None, robust_rel: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopConfig {
    pub plan: Option<PathBuf>,
    /// JSON with a `k` field; the controller gains are used when absent.
    pub gains: Option<PathBuf>,
    pub disturbance: Disturbance,
    pub perturbation: PlantPerturbation,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub plant: PlantParams,
    pub drive: DriveParams,
    pub ocp: OcpConfig,
    pub region: RegionSpec,
    pub controller: ControllerConfig,
    pub sweep: SweepConfig,
    pub tune: TuneConfig,
    pub simulate: SimulateConfig,
    pub identify: IdentifyConfig,
    pub verify: VerifyConfig,
    pub closedloop: ClosedLoopConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            plant: PlantParams::default(),
            drive: DriveParams::default(),
            ocp: OcpConfig::default(),
            region: RegionSpec { alpha: 10.0, rho: Some(60.0), theta: PI / 6.0 },
            controller: ControllerConfig::default(),
            sweep: SweepConfig::default(),
            tune: TuneConfig::default(),
            simulate: SimulateConfig::default(),
            identify: IdentifyConfig::default(),
            verify: VerifyConfig::default(),
            closedloop: ClosedLoopConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

/// The merged configuration document before typing.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub tree: Value,
}

fn read_json(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn lookup_mut<'a>(tree: &'a mut Value, dotted: &str) -> Option<&'a mut Value> {
    dotted.split('.').try_fold(tree, |node, key| node.as_object_mut()?.get_mut(key))
}

impl ProjectConfig {
    /// Built-in defaults. The spring pre-compression is left out so that it
    /// follows `theta_e` and any geometry override.
    pub fn defaults() -> Self {
        let mut tree = serde_json::to_value(Settings::default()).expect("settings serialize");
        if let Some(plant) = tree.get_mut("plant").and_then(Value::as_object_mut) {
            plant.remove("s_0");
        }
        ProjectConfig { tree }
    }

    /// Defaults overlaid with a project file. The plant section replaces
    /// the default plant as a whole; the other sections are merged key by key.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let mut cfg = Self::defaults();
        let Some(path) = path else {
            return Ok(cfg);
        };
        let doc = read_json(path)?;
        let Value::Object(doc) = doc else {
            return Err(Error::Parse(format!("{}: project file must be a JSON object", path.display())));
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut doc = Value::Object(doc);
        for section in FILE_SECTIONS {
            if let Some(Value::String(file)) = doc.get(section) {
                let sub = base.join(file);
                let value = read_json(&sub)?;
                doc[section] = value;
            }
        }
        for key in PATH_KEYS {
            if let Some(slot) = lookup_mut(&mut doc, key) {
                if let Value::String(s) = slot {
                    *slot = Value::String(base.join(s.as_str()).to_string_lossy().into_owned());
                }
            }
        }
        let Value::Object(doc) = doc else { unreachable!() };
        for (k, v) in doc {
            if k == "plant" {
                cfg.tree["plant"] = v;
            } else {
                match cfg.tree.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => return Err(Error::Config(format!("unknown configuration section {k:?}"))),
                }
            }
        }
        Ok(cfg)
    }

    /// Applies `dotted.path=value`; the value is read as JSON when it parses
    /// and as a string otherwise.
    pub fn set(&mut self, spec: &str) -> Result<(), Error> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
        let path = path.trim();
        if path.is_empty() {
            return Err(Error::Config(format!("override {spec:?} has an empty key")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut self.tree;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let obj = match node {
                Value::Object(m) => m,
                Value::Null => {
                    *node = Value::Object(Map::new());
                    node.as_object_mut().unwrap()
                }
                _ => {
                    return Err(Error::Config(format!(
                        "override {path:?}: {} is not an object",
                        keys[..i].join(".")
                    )))
                }
            };
            if i == 0 && !obj.contains_key(*key) {
                return Err(Error::Config(format!("unknown configuration section {key:?}")));
            }
            node = obj.entry(key.to_string()).or_insert(Value::Null);
        }
        *node = value;
        Ok(())
    }

    pub fn settings(&self) -> Result<Settings, Error> {
        serde_json::from_value(self.tree.clone()).map_err(|e| Error::Config(format!("configuration: {e}")))
    }

    /// SHA-256 over the command name and the canonical (key-sorted) tree.
    pub fn hash(&self, command: &str) -> String {
        let doc = serde_json::json!({ "command": command, "config": self.tree });
        let bytes = serde_json::to_vec(&doc).expect("json serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_type_check() {
        let s = ProjectConfig::defaults().settings().unwrap();
        assert_eq!(s, Settings::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut c = ProjectConfig::defaults();
        c.set("plant.tau_c=0.2").unwrap();
        c.set("ocp.solver.max_iter=7").unwrap();
        c.set("region.rho=null").unwrap();
        c.set("output_dir=elsewhere").unwrap();
        c.set("closedloop.disturbance={\"kind\":\"step\",\"at\":1.0,\"torque\":0.1}").unwrap();
        let s = c.settings().unwrap();
        assert_eq!(s.plant.trans.tau_c, 0.2);
        assert_eq!(s.ocp.solver.max_iter, 7);
        assert_eq!(s.region.rho, None);
        assert_eq!(s.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(s.closedloop.disturbance, Disturbance::Step { at: 1.0, torque: 0.1 });
    }

    #[test]
    fn precompression_follows_geometry_unless_pinned() {
        let mut c = ProjectConfig::defaults();
        c.set("plant.m_a=3.0").unwrap();
        let p = c.settings().unwrap().plant;
        let tau = barrier_core::plant::reaction_torque(p.mech.theta_e, &p.mech).unwrap();
        assert!(tau.abs() < 1e-9);
        c.set("plant.s_0=0.01").unwrap();
        assert_eq!(c.settings().unwrap().plant.mech.s_0, 0.01);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let mut c = ProjectConfig::defaults();
        assert!(c.set("no_equals_sign").is_err());
        assert!(c.set("bogus.x=1").is_err());
        assert!(c.set("seed.x=1").is_err());
        c.set("plant.not_a_field=1").unwrap();
        assert!(matches!(c.settings(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content_and_command() {
        let a = ProjectConfig::defaults();
        let mut b = ProjectConfig::defaults();
        assert_eq!(a.hash("plan"), b.hash("plan"));
        assert_ne!(a.hash("plan"), a.hash("tune"));
        b.set("seed=2").unwrap();
        assert_ne!(a.hash("plan"), b.hash("plan"));
        assert_eq!(a.hash("plan").len(), 64);
    }

    #[test]
    fn project_file_sections_and_paths() {
        let dir = std::env::temp_dir().join(format!("barrier-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("drive.json"), r#"{"V_ac": 30.0, "T": 0.01}"#).unwrap();
        std::fs::write(
            dir.join("project.json"),
            r#"{"drive": "drive.json", "ocp": {"N": 100, "T_s": 0.05, "substeps": 125}, "output_dir": "o", "seed": 9}"#,
        )
        .unwrap();
        let s = ProjectConfig::load(Some(&dir.join("project.json"))).unwrap().settings().unwrap();
        assert_eq!(s.drive.v_ac, 30.0);
        assert_eq!((s.ocp.n, s.ocp.tf), (100, 5.0));
        assert_eq!(s.output_dir, dir.join("o"));
        assert_eq!(s.seed, 9);
        let missing = ProjectConfig::load(Some(&dir.join("nope.json"))).unwrap_err();
        assert!(missing.to_string().contains("nope.json"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
