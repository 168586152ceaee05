//! Fixed-step RK4 and zero-order-hold sampled simulation.

use std::io::Write;

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Time grid: inner integration step `dt` and controller period `t_ctrl`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimGrid {
    pub t0: f64,
    pub tf: f64,
    pub dt: f64,
    pub t_ctrl: f64,
}

impl SimGrid {
    /// Grid with the default inner step `t_ctrl / 20`.
    pub fn new(t0: f64, tf: f64, t_ctrl: f64) -> Result<Self> {
        let g = SimGrid { t0, tf, dt: t_ctrl / 20.0, t_ctrl };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tf > self.t0) || !(self.dt > 0.0) || !(self.t_ctrl > 0.0) {
            return Err(Error::Config(format!("invalid grid {self:?}")));
        }
        let m = self.t_ctrl / self.dt;
        if m < 0.5 || (m - m.round()).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::Config(format!(
                "t_ctrl = {} is not an integer multiple of dt = {}",
                self.t_ctrl, self.dt
            )));
        }
        let n = (self.tf - self.t0) / self.t_ctrl;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of control periods {}",
                self.tf - self.t0,
                self.t_ctrl
            )));
        }
        Ok(())
    }

    /// Inner steps per control period.
    pub fn substeps(&self) -> usize {
        (self.t_ctrl / self.dt).round() as usize
    }

    /// Number of control periods in the horizon.
    pub fn periods(&self) -> usize {
        ((self.tf - self.t0) / self.t_ctrl).round() as usize
    }
}

/// Sampled trajectory; `inputs[k]` is the value held from `times[k]` on.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize = 3> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    pub inputs: Vec<f64>,
}

impl<const N: usize> Trajectory<N> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&SVector<f64, N>> {
        self.states.last()
    }
}

impl Trajectory<3> {
    pub const CSV_HEADER: &'static str = "t,i_a,theta_m,omega_m,input";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for ((t, x), u) in self.times.iter().zip(&self.states).zip(&self.inputs) {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                fmt_f64(x[2]),
                fmt_f64(*u)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let expected: Vec<&str> = Self::CSV_HEADER.split(',').collect();
        if cols != expected {
            return Err(Error::Parse(format!(
                "trajectory CSV header {:?}, expected {:?}",
                cols, expected
            )));
        }
        let mut traj = Trajectory { times: vec![], states: vec![], inputs: vec![] };
        for rec in rdr.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            traj.times.push(v[0]);
            traj.states.push(SVector::<f64, 3>::new(v[1], v[2], v[3]));
            traj.inputs.push(v[4]);
        }
        if traj.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("trajectory times must be strictly increasing".into()));
        }
        Ok(traj)
    }
}

/// One classical RK4 step with the input held constant.
pub fn rk4_step<const N: usize, U, F>(
    f: &F,
    x: &SVector<f64, N>,
    u: &U,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>, &U) -> Result<SVector<f64, N>>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("non-positive step {dt}")));
    }
    let k1 = f(x, u)?;
    let k2 = f(&(x + k1 * (0.5 * dt)), u)?;
    let k3 = f(&(x + k2 * (0.5 * dt)), u)?;
    let k4 = f(&(x + k3 * dt), u)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::BlowUp { t: f64::NAN, what: "non-finite RK4 update".into() })
    }
}

fn stamp<T>(r: Result<T>, t: f64) -> Result<T> {
    r.map_err(|e| match e {
        Error::BlowUp { what, .. } => Error::BlowUp { t, what },
        other => other,
    })
}

/// Simulates with an input recomputed once per control period by `policy`
/// (called with the period index, the tick time and the sampled state)
/// and held in between. The trajectory is sampled at every inner step.
pub fn simulate_hold<const N: usize, F, P>(
    f: &F,
    x0: SVector<f64, N>,
    mut policy: P,
    grid: &SimGrid,
) -> Result<Trajectory<N>>
where
    F: Fn(&SVector<f64, N>, &f64) -> Result<SVector<f64, N>>,
    P: FnMut(usize, f64, &SVector<f64, N>) -> Result<f64>,
{
    grid.validate()?;
    let m = grid.substeps();
    let periods = grid.periods();
    let total = m * periods;
    let mut traj = Trajectory {
        times: Vec::with_capacity(total + 1),
        states: Vec::with_capacity(total + 1),
        inputs: Vec::with_capacity(total + 1),
    };
    let mut x = x0;
    let mut u = 0.0;
    for step in 0..total {
        let t = grid.t0 + step as f64 * grid.dt;
        if step % m == 0 {
            u = policy(step / m, t, &x)?;
        }
        traj.times.push(t);
        traj.states.push(x);
        traj.inputs.push(u);
        x = stamp(rk4_step(f, &x, &u, grid.dt), t)?;
    }
    traj.times.push(grid.t0 + total as f64 * grid.dt);
    traj.states.push(x);
    traj.inputs.push(u);
    Ok(traj)
}

/// Zero-order-hold simulation from a precomputed per-period schedule.
pub fn simulate_zoh<const N: usize, F>(
    f: &F,
    x0: SVector<f64, N>,
    schedule: &[f64],
    grid: &SimGrid,
) -> Result<Trajectory<N>>
where
    F: Fn(&SVector<f64, N>, &f64) -> Result<SVector<f64, N>>,
{
    if schedule.len() < grid.periods() {
        return Err(Error::Config(format!(
            "schedule has {} values for {} control periods",
            schedule.len(),
            grid.periods()
        )));
    }
    simulate_hold(f, x0, |k, _, _| Ok(schedule[k]), grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector1, Vector3};

    fn decay(x: &Vector1<f64>, _: &f64) -> Result<Vector1<f64>> {
        Ok(-x)
    }

    #[test]
    fn zero_field_keeps_state() {
        let zero = |_: &Vector3<f64>, _: &f64| Ok(Vector3::zeros());
        let x = Vector3::new(1.0, -2.0, 3.5);
        assert_eq!(rk4_step(&zero, &x, &0.0, 0.1).unwrap(), x);
        let g = SimGrid::new(0.0, 1.0, 0.1).unwrap();
        let tr = simulate_zoh(&zero, x, &[0.0; 10], &g).unwrap();
        assert!(tr.states.iter().all(|s| *s == x));
        assert_eq!(tr.len(), 201);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let mut x = Vector1::new(1.0);
        for _ in 0..10 {
            x = rk4_step(&decay, &x, &0.0, 0.1).unwrap();
        }
        assert!((x[0] - (-1.0f64).exp()).abs() <= 1e-6);
    }

    fn global_error(h: f64) -> f64 {
        let n = (1.0 / h).round() as usize;
        let mut x = Vector1::new(1.0);
        for _ in 0..n {
            x = rk4_step(&decay, &x, &0.0, h).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn halving_step_gains_sixteen() {
        let ratio = global_error(0.1) / global_error(0.05);
        assert!((14.0..18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zoh_matches_closed_form() {
        let (a, b) = (-3.0, 2.0);
        let f = move |x: &Vector1<f64>, u: &f64| Ok(Vector1::new(a * x[0] + b * u));
        let grid = SimGrid { t0: 0.0, tf: 2.0, dt: 1e-3, t_ctrl: 0.1 };
        let sched: Vec<f64> = (0..20).map(|k| if k < 10 { 1.0 } else { -0.5 }).collect();
        let tr = simulate_zoh(&f, Vector1::new(0.25), &sched, &grid).unwrap();
        // exact ZOH propagation across each control period
        let mut x = 0.25;
        let ad = (a * 0.1f64).exp();
        let bd = b / a * (ad - 1.0);
        for (k, u) in sched.iter().enumerate() {
            let idx = k * 100;
            assert!((tr.states[idx][0] - x).abs() < 1e-8, "k={k}");
            x = ad * x + bd * u;
        }
        assert!((tr.states.last().unwrap()[0] - x).abs() < 1e-8);
    }

    #[test]
    fn blow_up_reports_time() {
        let f = |x: &Vector1<f64>, _: &f64| Ok(Vector1::new(x[0] * x[0]));
        let grid = SimGrid { t0: 0.0, tf: 2.0, dt: 0.01, t_ctrl: 0.1 };
        match simulate_zoh(&f, Vector1::new(1e100), &[0.0; 20], &grid) {
            Err(Error::BlowUp { t, .. }) => assert!(t.is_finite()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SimGrid { t0: 0.0, tf: 1.0, dt: 0.003, t_ctrl: 0.01 }.validate().is_err());
        assert!(SimGrid { t0: 0.0, tf: 1.005, dt: 0.001, t_ctrl: 0.01 }.validate().is_err());
        assert!(SimGrid { t0: 1.0, tf: 1.0, dt: 0.001, t_ctrl: 0.01 }.validate().is_err());
        let g = SimGrid::new(0.0, 5.0, 0.01).unwrap();
        assert_eq!(g.substeps(), 20);
        assert_eq!(g.periods(), 500);
    }

    #[test]
    fn csv_round_trip() {
        let tr = Trajectory::<3> {
            times: vec![0.0, 0.5],
            states: vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0 / 3.0, 2.0, -1e-9)],
            inputs: vec![0.4, 0.5],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,i_a,theta_m,omega_m,input\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tr);
    }
}
