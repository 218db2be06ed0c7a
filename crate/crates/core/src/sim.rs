//! Four-robot leader-follower formation with consensus references and
//! attack injection on sensor or inter-robot links.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{MitigationConfig, MitigationRecord, Mitigator, Pipeline};
use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::signal::AttackSignal;

/// Wrap to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Wheel radius, m.
    pub r: f64,
    /// Wheelbase, m.
    pub o: f64,
    /// Sampling period, s.
    pub ts: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self { r: 0.10, o: 0.50, ts: 0.05 }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        if self.r > 0.0 && self.o > 0.0 && self.ts > 0.0 {
            Ok(())
        } else {
            Err(Error::config("R, O and Ts must be positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub nu: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn at(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3: wrap_angle(x3), nu: 0.0, omega: 0.0 }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x1, self.x2]
    }
}

/// Wheel angular speeds, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

/// `(nu, omega)` to wheel speeds.
pub fn wheel_speeds(nu: f64, omega: f64, p: &RobotParams) -> WheelSpeeds {
    WheelSpeeds { right: (nu + omega * p.o / 2.0) / p.r, left: (nu - omega * p.o / 2.0) / p.r }
}

/// One Euler step of the differential-drive model. Heading is advanced
/// first and the position update uses the new heading.
pub fn step_robot(s: &RobotState, u: WheelSpeeds, p: &RobotParams, dt: f64) -> RobotState {
    let nu = p.r / 2.0 * (u.right + u.left);
    let omega = p.r / p.o * (u.right - u.left);
    let x3 = s.x3 + omega * dt;
    RobotState {
        x1: s.x1 + nu * x3.cos() * dt,
        x2: s.x2 + nu * x3.sin() * dt,
        x3: wrap_angle(x3),
        nu,
        omega,
    }
}

/// Proportional distance and heading controller with wheel saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub kv: f64,
    pub kw: f64,
    /// Wheel speed limit, rad/s.
    pub wheel_limit: f64,
}

impl Default for Controller {
    fn default() -> Self {
        Self { kv: 1.0, kw: 2.0, wheel_limit: 20.0 }
    }
}

impl Controller {
    /// Distance at which the speed command saturates, `R * limit / kv`.
    pub fn reach(&self, p: &RobotParams) -> f64 {
        p.r * self.wheel_limit / self.kv
    }

    /// Wheel speeds driving a robot at `position` with heading `heading`
    /// toward `target`. Turning keeps priority under wheel saturation; the
    /// forward speed takes what is left.
    pub fn command(&self, position: [f64; 2], heading: f64, target: [f64; 2], p: &RobotParams) -> WheelSpeeds {
        let (ex, ey) = (target[0] - position[0], target[1] - position[1]);
        let rho = ex.hypot(ey);
        if rho < 1e-9 {
            return WheelSpeeds::default();
        }
        let alpha = wrap_angle(ey.atan2(ex) - heading);
        let rim = p.r * self.wheel_limit;
        let w_max = rim / (p.o / 2.0);
        let omega = (self.kw * alpha).clamp(-w_max, w_max);
        let nu_max = rim - omega.abs() * p.o / 2.0;
        let nu = (self.kv * rho * alpha.cos().max(0.0)).min(nu_max);
        wheel_speeds(nu, omega, p)
    }
}

/// Adjacency `a[i][j] = 1` when robot `i` receives from robot `j`, plus a
/// bias per robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub a: Vec<Vec<u8>>,
    pub b: Vec<[f64; 2]>,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            a: vec![vec![0, 0, 0, 0], vec![1, 0, 1, 1], vec![1, 1, 0, 1], vec![1, 1, 1, 0]],
            b: vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [0.0, 3.0]],
        }
    }
}

impl Topology {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.b.len() != n || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::config("adjacency must be N x N with one bias per robot"));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row[i] != 0 || row.iter().any(|&v| v > 1) {
                return Err(Error::config("adjacency entries must be 0/1 with a zero diagonal"));
            }
        }
        if self.a[0].iter().any(|&v| v != 0) {
            return Err(Error::config("the leader (robot 1) receives from no one"));
        }
        Ok(())
    }

    /// 0-based neighbors of 0-based robot `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.a[i].iter().enumerate().filter(|(_, &v)| v == 1).map(|(j, _)| j)
    }

    pub fn has_link(&self, from: usize, to: usize) -> bool {
        from >= 1 && to >= 1 && from <= self.n() && to <= self.n() && self.a[to - 1][from - 1] == 1
    }

    /// Equilibrium offsets `d` from the leader solving `psi = 0` for every
    /// follower, by Gauss-Seidel.
    pub fn equilibrium_offsets(&self) -> Vec<[f64; 2]> {
        let n = self.n();
        let mut d = vec![[0.0; 2]; n];
        for _ in 0..10_000 {
            for i in 1..n {
                let deg = self.neighbors(i).count() as f64;
                if deg == 0.0 {
                    continue;
                }
                for c in 0..2 {
                    let s: f64 = self.neighbors(i).map(|j| d[j][c]).sum();
                    d[i][c] = (s + self.b[i][c]) / deg;
                }
            }
        }
        d
    }
}

/// Received neighbor outputs `y^{[j,i]}` keyed by 1-based `(from, to)`.
pub type Received = std::collections::BTreeMap<(usize, usize), [f64; 2]>;

/// `psi^i = sum_j a_ij (y^{[j,i]} - y^i) + b^i` and `v^i + eta psi^i`, per
/// robot. `own` is each robot's own output as its controller sees it.
pub fn consensus_reference(
    topo: &Topology,
    own: &[[f64; 2]],
    received: &Received,
    v: &[[f64; 2]],
    eta: f64,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let n = topo.n();
    if own.len() != n || v.len() != n {
        return Err(Error::shape("one output and one reference per robot"));
    }
    let mut psi = vec![[0.0; 2]; n];
    let mut next = v.to_vec();
    for i in 0..n {
        let mut acc = topo.b[i];
        for j in topo.neighbors(i) {
            let y = received.get(&(j + 1, i + 1)).ok_or(Error::MissingLink { from: j + 1, to: i + 1 })?;
            for c in 0..2 {
                acc[c] += y[c] - own[i][c];
            }
        }
        psi[i] = acc;
        for c in 0..2 {
            next[i][c] += eta * acc[c];
        }
    }
    Ok((psi, next))
}

/// Attack injection point, robots 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Link {
    /// Sensor to controller inside robot `robot`.
    Sensor { robot: usize },
    /// Transmission from robot `from` to robot `to`.
    Inter { from: usize, to: usize },
}

impl Link {
    pub fn validate(&self, topo: &Topology) -> Result<()> {
        match *self {
            Link::Sensor { robot } if robot >= 1 && robot <= topo.n() => Ok(()),
            Link::Inter { from, to } if topo.has_link(from, to) => Ok(()),
            other => Err(Error::UnknownLink(other.to_string())),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Sensor { robot } => write!(f, "sensor:{robot}"),
            Link::Inter { from, to } => write!(f, "{from}->{to}"),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownLink(s.to_string());
        if let Some(r) = s.strip_prefix("sensor:") {
            return Ok(Link::Sensor { robot: r.trim().parse().map_err(|_| bad())? });
        }
        let (a, b) = s.split_once("->").ok_or_else(bad)?;
        Ok(Link::Inter { from: a.trim().parse().map_err(|_| bad())?, to: b.trim().parse().map_err(|_| bad())? })
    }
}

/// Compromised value at `at` given the clean one.
pub fn inject_scenario(topo: &Topology, scenario: &Scenario, at: Link, t: f64, value: [f64; 2]) -> Result<[f64; 2]> {
    scenario.link.validate(topo)?;
    at.validate(topo)?;
    if scenario.link != at {
        return Ok(value);
    }
    let a = scenario.attack.value_at(t);
    let mut out = value;
    for c in 0..2 {
        if scenario.channels[c] {
            out[c] += a;
        }
    }
    Ok(out)
}

fn x_only() -> [bool; 2] {
    [true, false]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub link: Link,
    pub attack: AttackSignal,
    /// Attacked position channels `[X, Y]`.
    #[serde(default = "x_only")]
    pub channels: [bool; 2],
}

impl Scenario {
    /// Chirp of amplitude 4 sweeping 0.2 to 2 Hz over [3 s, 10 s].
    pub fn default_chirp() -> AttackSignal {
        AttackSignal::chirp(4.0, 0.2, 2.0, 3.0, 10.0)
    }

    /// Leader position sensor, X channel.
    pub fn one() -> Self {
        Self { link: Link::Sensor { robot: 1 }, attack: Self::default_chirp(), channels: x_only() }
    }

    /// Leader to robot 2 transmission, X channel.
    pub fn two() -> Self {
        Self { link: Link::Inter { from: 1, to: 2 }, attack: Self::default_chirp(), channels: x_only() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: RobotParams,
    pub controller: Controller,
    pub topology: Topology,
    pub start: [f64; 2],
    pub destination: [f64; 2],
    pub duration: f64,
    /// Consensus gain on `psi`.
    pub eta: f64,
    /// Position sensor noise standard deviation, m.
    pub noise_std: f64,
    pub seed: u64,
    pub scenario: Option<Scenario>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let params = RobotParams::default();
        Self {
            params,
            controller: Controller::default(),
            topology: Topology::default(),
            start: [40.0, 45.0],
            destination: [4.0, 7.0],
            duration: 15.0,
            eta: params.ts / 2.0,
            noise_std: 0.02,
            seed: 0,
            scenario: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.topology.validate()?;
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(self.eta > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::config("eta must be positive and noise_std non-negative"));
        }
        if let Some(s) = &self.scenario {
            s.link.validate(&self.topology)?;
            s.attack.validate()?;
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.params.ts).round() as usize
    }

    /// Initial state of 0-based robot `i`: start plus its bias, facing the
    /// destination.
    pub fn initial_state(&self, i: usize) -> RobotState {
        let b = self.topology.b[i];
        let (x, y) = (self.start[0] + b[0], self.start[1] + b[1]);
        RobotState::at(x, y, (self.destination[1] - y).atan2(self.destination[0] - x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// 1-based.
    pub robot: usize,
    pub state: RobotState,
    pub v: [f64; 2],
    pub attacked: bool,
    pub mitigated: bool,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub robots: usize,
    pub log: Vec<LogRow>,
    /// Mitigation records for the X and Y channels at the attacked link.
    pub records: Option<[Vec<MitigationRecord>; 2]>,
}

impl SimRun {
    /// Logged positions of a 1-based robot.
    pub fn trajectory(&self, robot: usize) -> Vec<[f64; 2]> {
        self.log.iter().filter(|r| r.robot == robot).map(|r| r.state.position()).collect()
    }

    pub fn states(&self, robot: usize) -> Vec<RobotState> {
        self.log.iter().filter(|r| r.robot == robot).map(|r| r.state).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W, meta: &[(&str, String)]) -> Result<()> {
        write_csv(
            w,
            meta,
            &["t", "robot", "x1", "x2", "x3", "v1", "v2", "attacked", "mitigated"],
            self.log.iter().map(|r| {
                vec![
                    format!("{:.2}", r.t),
                    r.robot.to_string(),
                    r.state.x1.to_string(),
                    r.state.x2.to_string(),
                    r.state.x3.to_string(),
                    r.v[0].to_string(),
                    r.v[1].to_string(),
                    (r.attacked as u8).to_string(),
                    (r.mitigated as u8).to_string(),
                ]
            }),
        )
    }
}

/// RMS distance between two equally long trajectories.
pub fn deviation_rmse(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("trajectories differ in length"));
    }
    let ss: f64 = a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

fn noise_streams(cfg: &SimConfig) -> Result<Vec<(ChaCha8Rng, Normal<f64>)>> {
    let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::config(e.to_string()))?;
    Ok((0..cfg.topology.n())
        .map(|i| (ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64)), normal))
        .collect())
}

/// Closed-loop run. With `mitigation`, a mitigator per position channel
/// corrects the attacked link before the value is used.
pub fn run_formation(cfg: &SimConfig, mitigation: Option<(&Pipeline, MitigationConfig)>) -> Result<SimRun> {
    cfg.validate()?;
    let topo = &cfg.topology;
    let n = topo.n();
    let p = &cfg.params;
    let mut states: Vec<RobotState> = (0..n).map(|i| cfg.initial_state(i)).collect();
    let mut v: Vec<[f64; 2]> = states.iter().map(|s| s.position()).collect();
    v[0] = cfg.destination;
    let mut noise = noise_streams(cfg)?;
    let scenario = cfg.scenario.clone();
    let mut mitigators = match (&scenario, mitigation) {
        (Some(_), Some((pipe, mcfg))) => Some([Mitigator::new(pipe.clone(), mcfg)?, Mitigator::new(pipe.clone(), mcfg)?]),
        (None, Some(_)) => return Err(Error::config("mitigation requires an attack scenario")),
        _ => None,
    };
    let mut records: [Vec<MitigationRecord>; 2] = [Vec::new(), Vec::new()];
    let mut log = Vec::with_capacity(n * (cfg.steps() + 1));
    for step in 0..=cfg.steps() {
        let t = step as f64 * p.ts;
        let measured: Vec<[f64; 2]> = states
            .iter()
            .zip(noise.iter_mut())
            .map(|(s, (rng, dist))| {
                if cfg.noise_std > 0.0 {
                    [s.x1 + dist.sample(rng), s.x2 + dist.sample(rng)]
                } else {
                    s.position()
                }
            })
            .collect();
        let mut pass = |link: Link, clean: [f64; 2]| -> Result<[f64; 2]> {
            let Some(sc) = &scenario else { return Ok(clean) };
            if sc.link != link {
                return Ok(clean);
            }
            let received = inject_scenario(topo, sc, link, t, clean)?;
            match mitigators.as_mut() {
                Some(ms) => {
                    let mut out = [0.0; 2];
                    for c in 0..2 {
                        let r = ms[c].push(received[c], Some(clean[c]))?;
                        out[c] = r.y_breve;
                        records[c].push(r);
                    }
                    Ok(out)
                }
                None => Ok(received),
            }
        };
        let own: Vec<[f64; 2]> =
            (0..n).map(|i| pass(Link::Sensor { robot: i + 1 }, measured[i])).collect::<Result<_>>()?;
        let mut received = Received::new();
        for i in 0..n {
            for j in topo.neighbors(i) {
                received.insert((j + 1, i + 1), pass(Link::Inter { from: j + 1, to: i + 1 }, measured[j])?);
            }
        }
        let (_, next) = consensus_reference(topo, &own, &received, &v, cfg.eta)?;
        for i in 0..n {
            let (attacked, mitigated) = match &scenario {
                Some(sc) => {
                    let hit = match sc.link {
                        Link::Sensor { robot } => robot == i + 1,
                        Link::Inter { to, .. } => to == i + 1,
                    };
                    (hit && sc.attack.is_active(t), hit && mitigators.is_some())
                }
                None => (false, false),
            };
            log.push(LogRow { t, robot: i + 1, state: states[i], v: v[i], attacked, mitigated });
        }
        v = next;
        let reach = cfg.controller.reach(p);
        for i in 0..n {
            if topo.neighbors(i).next().is_none() {
                continue;
            }
            let (dx, dy) = (v[i][0] - own[i][0], v[i][1] - own[i][1]);
            let dist = dx.hypot(dy);
            if dist > reach {
                v[i] = [own[i][0] + dx * reach / dist, own[i][1] + dy * reach / dist];
            }
        }
        for i in 0..n {
            let u = cfg.controller.command(own[i], states[i].x3, v[i], p);
            states[i] = step_robot(&states[i], u, p, p.ts);
            let s = &states[i];
            if !(s.x1.is_finite() && s.x2.is_finite()) || s.x1.hypot(s.x2) > 1e6 {
                log::error!("robot {} diverged at t={t:.2}", i + 1);
                return Err(Error::SimulationDiverged { t, reason: format!("robot {} position norm exceeds 1e6", i + 1) });
            }
        }
    }
    Ok(SimRun { robots: n, log, records: mitigators.map(|_| records) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn zero_wheels_hold_still() {
        let s = RobotState::at(1.0, 2.0, 0.4);
        let n = step_robot(&s, WheelSpeeds::default(), &RobotParams::default(), 0.05);
        assert_eq!(n.position(), s.position());
        assert_eq!(n.x3, s.x3);
    }

    #[test]
    fn equal_wheels_go_straight() {
        let p = RobotParams::default();
        let s = RobotState::at(0.0, 0.0, 0.7);
        let n = step_robot(&s, WheelSpeeds { left: 3.0, right: 3.0 }, &p, 0.05);
        assert!((n.x1 - p.r * 3.0 * 0.7f64.cos() * 0.05).abs() < 1e-15);
        assert_eq!(n.x3, s.x3);
        let w = wheel_speeds(1.2, -0.4, &p);
        let m = step_robot(&s, w, &p, 1e-3);
        assert!((m.nu - 1.2).abs() < 1e-12 && (m.omega + 0.4).abs() < 1e-12);
    }

    #[test]
    fn consensus_examples() {
        let topo = Topology::default();
        let d = topo.equilibrium_offsets();
        let own: Vec<[f64; 2]> = d.iter().map(|o| [10.0 + o[0], -2.0 + o[1]]).collect();
        let mut rx = Received::new();
        for i in 0..4 {
            for j in topo.neighbors(i) {
                rx.insert((j + 1, i + 1), own[j]);
            }
        }
        let v = own.clone();
        let (psi, next) = consensus_reference(&topo, &own, &rx, &v, 0.05).unwrap();
        for i in 0..4 {
            assert!(psi[i][0].abs() < 1e-9 && psi[i][1].abs() < 1e-9);
            assert!((next[i][0] - v[i][0]).abs() < 1e-9);
        }
        rx.remove(&(1, 2));
        assert!(matches!(consensus_reference(&topo, &own, &rx, &v, 0.05), Err(Error::MissingLink { from: 1, to: 2 })));

        let pair = Topology { a: vec![vec![0, 0], vec![1, 0]], b: vec![[0.0; 2]; 2] };
        let own = vec![[1.0, 0.0], [0.0, 0.0]];
        let rx: Received = [((1, 2), [1.0, 0.0])].into();
        let (psi, _) = consensus_reference(&pair, &own, &rx, &own, 1.0).unwrap();
        assert_eq!(psi[1], [1.0, 0.0]);
        assert_eq!(psi[0], [0.0, 0.0]);
    }

    #[test]
    fn links_parse_and_validate() {
        let topo = Topology::default();
        assert_eq!("1->2".parse::<Link>().unwrap(), Link::Inter { from: 1, to: 2 });
        assert_eq!("sensor:1".parse::<Link>().unwrap(), Link::Sensor { robot: 1 });
        assert!("2->1".parse::<Link>().unwrap().validate(&topo).is_err());
        assert!("sensor:5".parse::<Link>().unwrap().validate(&topo).is_err());
        assert!("x".parse::<Link>().is_err());
        let l = Link::Inter { from: 1, to: 2 };
        let mut sc = Scenario { link: l, attack: AttackSignal::bias(2.0, 0.0, 1.0), channels: [true, true] };
        assert_eq!(inject_scenario(&topo, &sc, l, 0.5, [1.0, 1.0]).unwrap(), [3.0, 3.0]);
        assert_eq!(inject_scenario(&topo, &sc, Link::Inter { from: 1, to: 3 }, 0.5, [1.0, 1.0]).unwrap(), [1.0, 1.0]);
        assert_eq!(inject_scenario(&topo, &sc, l, 1.5, [1.0, 1.0]).unwrap(), [1.0, 1.0]);
        sc.channels = [true, false];
        assert_eq!(inject_scenario(&topo, &sc, l, 0.5, [1.0, 1.0]).unwrap(), [3.0, 1.0]);
        sc.attack = AttackSignal::none();
        assert_eq!(inject_scenario(&topo, &sc, l, 0.5, [1.0, 1.0]).unwrap(), [1.0, 1.0]);
        sc.link = Link::Inter { from: 2, to: 1 };
        assert!(inject_scenario(&topo, &sc, l, 0.5, [1.0, 1.0]).is_err());
    }

    #[test]
    fn attack_free_formation_settles() {
        let cfg = SimConfig { duration: 80.0, noise_std: 0.0, ..Default::default() };
        let run = run_formation(&cfg, None).unwrap();
        let d = cfg.topology.equilibrium_offsets();
        let lead = *run.trajectory(1).last().unwrap();
        assert!((lead[0] - 4.0).hypot(lead[1] - 7.0) < 0.1);
        for r in 2..=4 {
            let p = *run.trajectory(r).last().unwrap();
            let want = [lead[0] + d[r - 1][0], lead[1] + d[r - 1][1]];
            assert!((p[0] - want[0]).hypot(p[1] - want[1]) < 0.1, "robot {r}: {p:?} vs {want:?}");
        }
    }

    #[test]
    fn leader_drives_straight_at_full_speed() {
        let cfg = SimConfig { noise_std: 0.0, ..Default::default() };
        let run = run_formation(&cfg, None).unwrap();
        let s = run.states(1);
        assert!((s[10].nu - 2.0).abs() < 1e-9);
        assert!(s[10].omega.abs() < 1e-9);
    }

    #[test]
    fn short_run_logs_every_robot() {
        let cfg = SimConfig { duration: 1.0, ..Default::default() };
        let run = run_formation(&cfg, None).unwrap();
        assert_eq!(run.log.len(), 4 * 21);
        assert!(run.records.is_none());
    }
}
