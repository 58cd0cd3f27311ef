//! Benchmark networks and their query scenarios.
//!
//! Every numeric constant of both benchmarks is listed here and nowhere else.
//!
//! Thermostat, two time slices `t = 0, 1` (temperatures in degrees Celsius):
//!
//! | variable        | domain                  | CPD                                                        |
//! |-----------------|-------------------------|------------------------------------------------------------|
//! | OutsideTemp_0   | [-10, 30]               | uniform                                                    |
//! | InsideTemp_0    | [0, 40]                 | N(12 + 0.3 OutsideTemp_0, 4)                               |
//! | SensorOK_t      | {ok, broken}            | (0.9999, 0.0001)                                           |
//! | Reading_t       | {low, medium, high}     | ok: softmax on InsideTemp_t, broken: (1/3, 1/3, 1/3)       |
//! | Heater_t        | {off, on}               | low (0.1, 0.9), medium (0.5, 0.5), high (0.9, 0.1)         |
//! | OutsideTemp_1   | [-10, 30]               | N(OutsideTemp_0, 4)                                        |
//! | InsideTemp_1    | [0, 40]                 | N(c + 0.2 OutsideTemp_1 + 0.7 InsideTemp_0, 2), c = 1 if Heater_0 is off, 6 if on |
//!
//! The working reading softmax has three regions with scores
//! `0`, `2 (T - 17)` and `4 T - 80` (so the boundaries sit at 17 and 23 degrees)
//! and reading distributions low (0.996, 0.003, 0.001), medium (0.002, 0.996,
//! 0.002) and high (0.001, 0.003, 0.996).
//!
//! Traffic, `n` time slices (lateral and forward speeds in m/s):
//!
//! | variable        | domain                  | CPD                                                        |
//! |-----------------|-------------------------|------------------------------------------------------------|
//! | Lane_0          | {left, center, right}   | (0.2, 0.6, 0.2)                                            |
//! | Lane_t          | same                    | stay 0.9; left/right move to center 0.1; center moves 0.05 each way |
//! | Xdot_0          | [-5, 5]                 | left N(0.5, 1), center N(0, 0.5), right N(-0.5, 1)         |
//! | Xdot_t          | [-5, 5]                 | N(b + 0.7 Xdot_(t-1), 0.5), b = 0.3 / 0 / -0.3 by Lane_t   |
//! | SensorOK_t      | {ok, broken}            | (0.9999, 0.0001)                                           |
//! | XdotSensed_t    | [-5, 5]                 | ok: N(Xdot_t, 0.1), broken: uniform                        |
//! | Ydot_0          | [0, 40]                 | N(25, 16)                                                  |
//! | Ydot_t          | [0, 40]                 | N(2.5 + 0.9 Ydot_(t-1), 2)                                 |
//! | YdotSensed_t    | [0, 40]                 | N(Ydot_t, 1)                                               |
//! | LaneSensed_t    | {left, center, right}   | 0.85 on Lane_t, 0.075 on each other lane                   |
//! | Signal_t        | {off, left, right}      | left (0.6, 0.05, 0.35), center (0.8, 0.1, 0.1), right (0.6, 0.35, 0.05) |
//!
//! Gaussian parameters are (mean, variance).

use crate::error::{Error, Result};
use crate::network::{ClgBlock, Cpd, CpdBody, Evidence, HybridNetwork, Region, Value, VarId, Variable};

pub const SENSOR_BROKEN_PRIOR: f64 = 1e-4;

const OUTSIDE_RANGE: (f64, f64) = (-10.0, 30.0);
const INSIDE_RANGE: (f64, f64) = (0.0, 40.0);
const INSIDE_0: (f64, f64, f64) = (12.0, 0.3, 4.0);
const OUTSIDE_DRIFT_VARIANCE: f64 = 4.0;
const INSIDE_1_WEIGHTS: [f64; 2] = [0.2, 0.7];
const INSIDE_1_INTERCEPT: [f64; 2] = [1.0, 6.0];
const INSIDE_1_VARIANCE: f64 = 2.0;
const READING_ALPHA: [[f64; 2]; 3] = [[0.0, 0.0], [-34.0, 2.0], [-80.0, 4.0]];
const READING_P: [[f64; 3]; 3] = [[0.996, 0.003, 0.001], [0.002, 0.996, 0.002], [0.001, 0.003, 0.996]];
const HEATER_ROWS: [[f64; 2]; 3] = [[0.1, 0.9], [0.5, 0.5], [0.9, 0.1]];

const XDOT_RANGE: (f64, f64) = (-5.0, 5.0);
const YDOT_RANGE: (f64, f64) = (0.0, 40.0);
const LANE_0: [f64; 3] = [0.2, 0.6, 0.2];
const LANE_STEP: [[f64; 3]; 3] = [[0.9, 0.1, 0.0], [0.05, 0.9, 0.05], [0.0, 0.1, 0.9]];
const XDOT_0: [(f64, f64); 3] = [(0.5, 1.0), (0.0, 0.5), (-0.5, 1.0)];
const XDOT_BIAS: [f64; 3] = [0.3, 0.0, -0.3];
const XDOT_PERSISTENCE: f64 = 0.7;
const XDOT_VARIANCE: f64 = 0.5;
const XDOT_SENSOR_VARIANCE: f64 = 0.1;
const YDOT_0: (f64, f64) = (25.0, 16.0);
const YDOT_STEP: (f64, f64, f64) = (2.5, 0.9, 2.0);
const YDOT_SENSOR_VARIANCE: f64 = 1.0;
const LANE_SENSOR_CORRECT: f64 = 0.85;
const SIGNAL_ROWS: [[f64; 3]; 3] = [[0.6, 0.05, 0.35], [0.8, 0.1, 0.1], [0.6, 0.35, 0.05]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    Thermostat,
    /// Three time slices.
    Traffic,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Thermostat => "thermostat",
            Benchmark::Traffic => "traffic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "thermostat" => Ok(Benchmark::Thermostat),
            "traffic" => Ok(Benchmark::Traffic),
            other => Err(Error::Contract(format!("unknown benchmark network '{other}'"))),
        }
    }
}

pub fn benchmark(which: Benchmark) -> HybridNetwork {
    match which {
        Benchmark::Thermostat => build_thermostat_network(),
        Benchmark::Traffic => build_traffic_dbn(3).expect("three slices"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Evidence the model finds typical.
    Easy,
    /// Evidence best explained by a broken sensor.
    Conflicting,
    /// A single evidence variable.
    Single,
    /// Every observable variable of every slice.
    Full,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Easy => "easy",
            ScenarioKind::Conflicting => "conflicting",
            ScenarioKind::Single => "single",
            ScenarioKind::Full => "full",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub evidence: Evidence,
    pub query: VarId,
    /// The sensor-state variable whose broken probability the scenario probes.
    pub sensor: Option<VarId>,
}

fn id(net: &HybridNetwork, name: &str) -> VarId {
    net.find(name).unwrap_or_else(|| panic!("benchmark variable {name} exists"))
}

fn state(net: &HybridNetwork, var: &str, label: &str) -> Value {
    let v = id(net, var);
    match &net.variables[v].kind {
        crate::network::VariableKind::Discrete { states } => {
            Value::Discrete(states.iter().position(|s| s == label).expect("known state"))
        }
        crate::network::VariableKind::Continuous { .. } => panic!("{var} is continuous"),
    }
}

pub fn scenario(which: Benchmark, kind: ScenarioKind) -> Scenario {
    let net = benchmark(which);
    let n = |name: &str| id(&net, name);
    let (evidence, query, sensor) = match (which, kind) {
        (Benchmark::Thermostat, ScenarioKind::Easy | ScenarioKind::Full) => (
            Evidence::new()
                .with(n("Reading_0"), state(&net, "Reading_0", "medium"))
                .with(n("Reading_1"), state(&net, "Reading_1", "medium")),
            n("OutsideTemp_0"),
            Some(n("SensorOK_0")),
        ),
        (Benchmark::Thermostat, ScenarioKind::Conflicting) => (
            Evidence::new()
                .with(n("Reading_0"), state(&net, "Reading_0", "high"))
                .with(n("Reading_1"), state(&net, "Reading_1", "low")),
            n("OutsideTemp_0"),
            Some(n("SensorOK_0")),
        ),
        (Benchmark::Thermostat, ScenarioKind::Single) => (
            Evidence::new().with(n("Reading_1"), state(&net, "Reading_1", "medium")),
            n("OutsideTemp_0"),
            Some(n("SensorOK_1")),
        ),
        (Benchmark::Traffic, ScenarioKind::Easy) => (
            Evidence::new()
                .with(n("Xdot_0"), Value::Continuous(0.5))
                .with(n("XdotSensed_2"), Value::Continuous(0.3)),
            n("XdotSensed_1"),
            Some(n("SensorOK_2")),
        ),
        (Benchmark::Traffic, ScenarioKind::Conflicting) => (
            Evidence::new()
                .with(n("Xdot_0"), Value::Continuous(0.5))
                .with(n("XdotSensed_2"), Value::Continuous(-4.5)),
            n("XdotSensed_1"),
            Some(n("SensorOK_2")),
        ),
        (Benchmark::Traffic, ScenarioKind::Single) => (
            Evidence::new().with(n("XdotSensed_1"), Value::Continuous(0.5)),
            n("Xdot_1"),
            Some(n("SensorOK_1")),
        ),
        (Benchmark::Traffic, ScenarioKind::Full) => {
            let xdot = [0.2, 0.5, 0.4];
            let ydot = [24.0, 25.0, 26.0];
            let signal = ["off", "off", "left"];
            let mut ev = Evidence::new();
            for t in 0..3 {
                ev.insert(n(&format!("XdotSensed_{t}")), Value::Continuous(xdot[t]));
                ev.insert(n(&format!("YdotSensed_{t}")), Value::Continuous(ydot[t]));
                ev.insert(n(&format!("LaneSensed_{t}")), state(&net, &format!("LaneSensed_{t}"), "center"));
                ev.insert(n(&format!("Signal_{t}")), state(&net, &format!("Signal_{t}"), signal[t]));
            }
            (ev, n("Xdot_1"), Some(n("SensorOK_1")))
        }
    };
    Scenario {
        name: format!("{}-{}", which.name(), kind.name()),
        evidence,
        query,
        sensor,
    }
}

struct Builder {
    variables: Vec<Variable>,
    cpds: Vec<Cpd>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            variables: vec![],
            cpds: vec![],
        }
    }

    fn id(&self, name: &str) -> VarId {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .unwrap_or_else(|| panic!("{name} defined before use"))
    }

    fn discrete(&mut self, name: &str, states: &[&str], parents: &[&str], body: CpdBody) -> VarId {
        let v = self.variables.len();
        self.variables.push(Variable::discrete(v, name, states));
        self.push_cpd(v, parents, body);
        v
    }

    fn continuous(&mut self, name: &str, range: (f64, f64), parents: &[&str], body: CpdBody) -> VarId {
        let v = self.variables.len();
        self.variables.push(Variable::continuous(v, name, range.0, range.1));
        self.push_cpd(v, parents, body);
        v
    }

    fn push_cpd(&mut self, child: VarId, parents: &[&str], body: CpdBody) {
        let parents = parents.iter().map(|p| self.id(p)).collect();
        self.cpds.push(Cpd { child, parents, body });
    }

    fn finish(self) -> Result<HybridNetwork> {
        HybridNetwork::validated(self.variables, self.cpds)
    }
}

fn table<const N: usize>(rows: &[[f64; N]]) -> CpdBody {
    CpdBody::Table {
        rows: rows.iter().map(|r| r.to_vec()).collect(),
    }
}

fn linear(intercept: f64, weights: &[f64], variance: f64) -> ClgBlock {
    ClgBlock::Linear {
        intercept,
        weights: weights.to_vec(),
        variance,
    }
}

fn clg(blocks: Vec<ClgBlock>) -> CpdBody {
    CpdBody::Clg { blocks }
}

fn sensor_prior() -> CpdBody {
    table(&[[1.0 - SENSOR_BROKEN_PRIOR, SENSOR_BROKEN_PRIOR]])
}

pub fn build_thermostat_network() -> HybridNetwork {
    let mut b = Builder::new();
    let levels = ["low", "medium", "high"];
    b.continuous("OutsideTemp_0", OUTSIDE_RANGE, &[], CpdBody::Uniform);
    b.continuous(
        "InsideTemp_0",
        INSIDE_RANGE,
        &["OutsideTemp_0"],
        clg(vec![linear(INSIDE_0.0, &[INSIDE_0.1], INSIDE_0.2)]),
    );
    for t in 0..2 {
        let sensor = format!("SensorOK_{t}");
        let inside = format!("InsideTemp_{t}");
        let reading = format!("Reading_{t}");
        if t == 1 {
            b.continuous(
                "OutsideTemp_1",
                OUTSIDE_RANGE,
                &["OutsideTemp_0"],
                clg(vec![linear(0.0, &[1.0], OUTSIDE_DRIFT_VARIANCE)]),
            );
            b.continuous(
                "InsideTemp_1",
                INSIDE_RANGE,
                &["OutsideTemp_1", "InsideTemp_0", "Heater_0"],
                clg(INSIDE_1_INTERCEPT
                    .iter()
                    .map(|c| linear(*c, &INSIDE_1_WEIGHTS, INSIDE_1_VARIANCE))
                    .collect()),
            );
        }
        b.discrete(&sensor, &["ok", "broken"], &[], sensor_prior());
        let working = READING_ALPHA
            .iter()
            .zip(&READING_P)
            .map(|(a, p)| Region {
                alpha: a.to_vec(),
                p: p.to_vec(),
            })
            .collect();
        let broken = vec![Region {
            alpha: vec![0.0, 0.0],
            p: vec![1.0 / 3.0; 3],
        }];
        b.discrete(
            &reading,
            &levels,
            &[&inside, &sensor],
            CpdBody::Softmax {
                blocks: vec![working, broken],
            },
        );
        b.discrete(&format!("Heater_{t}"), &["off", "on"], &[&reading], table(&HEATER_ROWS));
    }
    b.finish().expect("thermostat network is valid")
}

pub fn build_traffic_dbn(slices: usize) -> Result<HybridNetwork> {
    if slices == 0 {
        return Err(Error::Contract("a DBN needs at least one slice".into()));
    }
    let lanes = ["left", "center", "right"];
    let sensor_rows: Vec<[f64; 3]> = (0..3)
        .map(|l| {
            let mut r = [(1.0 - LANE_SENSOR_CORRECT) / 2.0; 3];
            r[l] = LANE_SENSOR_CORRECT;
            r
        })
        .collect();
    let mut b = Builder::new();
    for t in 0..slices {
        let lane = format!("Lane_{t}");
        let xdot = format!("Xdot_{t}");
        let ydot = format!("Ydot_{t}");
        let sensor = format!("SensorOK_{t}");
        if t == 0 {
            b.discrete(&lane, &lanes, &[], table(&[LANE_0]));
            b.continuous(
                &xdot,
                XDOT_RANGE,
                &[&lane],
                clg(XDOT_0.iter().map(|(m, v)| linear(*m, &[], *v)).collect()),
            );
            b.continuous(&ydot, YDOT_RANGE, &[], clg(vec![linear(YDOT_0.0, &[], YDOT_0.1)]));
        } else {
            let prev_lane = format!("Lane_{}", t - 1);
            let prev_xdot = format!("Xdot_{}", t - 1);
            let prev_ydot = format!("Ydot_{}", t - 1);
            b.discrete(&lane, &lanes, &[&prev_lane], table(&LANE_STEP));
            b.continuous(
                &xdot,
                XDOT_RANGE,
                &[&prev_xdot, &lane],
                clg(XDOT_BIAS
                    .iter()
                    .map(|c| linear(*c, &[XDOT_PERSISTENCE], XDOT_VARIANCE))
                    .collect()),
            );
            b.continuous(
                &ydot,
                YDOT_RANGE,
                &[&prev_ydot],
                clg(vec![linear(YDOT_STEP.0, &[YDOT_STEP.1], YDOT_STEP.2)]),
            );
        }
        b.discrete(&sensor, &["ok", "broken"], &[], sensor_prior());
        b.continuous(
            &format!("XdotSensed_{t}"),
            XDOT_RANGE,
            &[&xdot, &sensor],
            clg(vec![linear(0.0, &[1.0], XDOT_SENSOR_VARIANCE), ClgBlock::Uniform]),
        );
        b.continuous(
            &format!("YdotSensed_{t}"),
            YDOT_RANGE,
            &[&ydot],
            clg(vec![linear(0.0, &[1.0], YDOT_SENSOR_VARIANCE)]),
        );
        b.discrete(&format!("LaneSensed_{t}"), &lanes, &[&lane], table(&sensor_rows));
        b.discrete(&format!("Signal_{t}"), &["off", "left", "right"], &[&lane], table(&SIGNAL_ROWS));
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Value;

    #[test]
    fn networks_validate() {
        let t = build_thermostat_network();
        assert!(t.validate().is_ok());
        assert_eq!(t.len(), 10);
        let d = build_traffic_dbn(3).unwrap();
        assert!(d.validate().is_ok());
        assert_eq!(d.len(), 24);
        assert_eq!(scenario(Benchmark::Traffic, ScenarioKind::Full).evidence.len(), 12);
        assert_eq!(scenario(Benchmark::Traffic, ScenarioKind::Single).evidence.len(), 1);
    }

    #[test]
    fn cold_room_reads_low() {
        let net = build_thermostat_network();
        let cpd = net.cpd_of(net.find("Reading_0").unwrap()).unwrap();
        let ok = [Value::Continuous(0.0), Value::Discrete(0)];
        let p = cpd.eval(&net, Value::Discrete(0), &ok).unwrap();
        assert!(p > 0.9);
    }

    #[test]
    fn broken_prior() {
        let net = build_thermostat_network();
        let cpd = net.cpd_of(net.find("SensorOK_0").unwrap()).unwrap();
        assert_eq!(cpd.eval(&net, Value::Discrete(1), &[]).unwrap(), 0.0001);
    }
}
