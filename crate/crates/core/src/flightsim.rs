//! Virtual vehicle emulator.
//!
//! A [`FlightPlan`] is a launch point followed by waypoints flown at a fixed
//! cruise speed. The vehicle climbs vertically from the launch point's ground
//! altitude to the takeoff altitude, flies each segment in order, optionally
//! returns to the launch point, and then holds at the terminal point.
//!
//! [`position_at`] is the pure, open-loop trajectory. [`Vehicle`] wraps it with
//! the mutable state needed to honor operator commands (hold, goto, land).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, GeoPosition};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("malformed flight plan document: {0}")]
    MalformedDocument(String),
    #[error("invalid flight plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waypoint {
    pub index: usize,
    pub position: GeoPosition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    waypoints: Vec<Waypoint>,
    cruise_speed_mps: f64,
    takeoff_altitude_m: f64,
    return_to_start: bool,
    legs: Vec<Leg>,
}

/// Native on-disk flight plan layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PlanDocument {
    cruise_speed: Option<f64>,
    takeoff_altitude: Option<f64>,
    #[serde(default)]
    return_to_start: bool,
    waypoints: Option<Vec<GeoPosition>>,
}

/// One straight piece of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    from: GeoPosition,
    to: GeoPosition,
    length_m: f64,
    /// Distance flown before this leg starts.
    offset_m: f64,
    phase: Phase,
}

impl Leg {
    fn new(from: GeoPosition, to: GeoPosition, offset_m: f64, phase: Phase) -> Self {
        Self {
            from,
            to,
            length_m: geodesy::slant_distance(&from, &to),
            offset_m,
            phase,
        }
    }

    fn point(&self, along_m: f64) -> GeoPosition {
        if self.length_m <= 0.0 {
            return self.to;
        }
        geodesy::interpolate(&self.from, &self.to, along_m / self.length_m)
    }

    fn heading_deg(&self) -> Option<f64> {
        let ground = geodesy::haversine_distance(&self.from, &self.to);
        (ground > 1e-6).then(|| geodesy::initial_bearing_deg(&self.from, &self.to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Idle,
    Takeoff,
    /// Flying the segment that starts at the given path point.
    Enroute(usize),
    Landing,
    Landed,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "Idle",
            Phase::Takeoff => "Takeoff",
            Phase::Enroute(_) => "Enroute",
            Phase::Landing => "Landing",
            Phase::Landed => "Landed",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VehicleState {
    pub position: GeoPosition,
    pub phase: Phase,
    pub mission_time_s: f64,
    /// Bearing of the current leg; vertical legs keep the previous heading.
    pub heading_deg: f64,
}

impl FlightPlan {
    pub fn new(
        waypoints: Vec<GeoPosition>,
        cruise_speed_mps: f64,
        takeoff_altitude_m: f64,
        return_to_start: bool,
    ) -> Result<Self, PlanError> {
        if waypoints.len() < 2 {
            return Err(PlanError::InvalidPlan(format!(
                "need at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if !(cruise_speed_mps.is_finite() && cruise_speed_mps > 0.0) {
            return Err(PlanError::InvalidPlan(format!(
                "cruise speed must be positive, got {cruise_speed_mps}"
            )));
        }
        if !(takeoff_altitude_m.is_finite() && takeoff_altitude_m > 0.0) {
            return Err(PlanError::InvalidPlan(format!(
                "takeoff altitude must be positive, got {takeoff_altitude_m}"
            )));
        }
        if takeoff_altitude_m < waypoints[0].altitude_m() {
            return Err(PlanError::InvalidPlan(
                "takeoff altitude below the launch point".into(),
            ));
        }
        if waypoints.iter().any(|w| w.altitude_m() < 0.0) {
            return Err(PlanError::InvalidPlan("negative waypoint altitude".into()));
        }

        let launch = waypoints[0]
            .with_altitude(takeoff_altitude_m)
            .map_err(|e| PlanError::InvalidPlan(e.to_string()))?;
        let mut path = vec![launch];
        path.extend_from_slice(&waypoints[1..]);
        if return_to_start {
            path.push(launch);
        }

        let mut legs = Vec::with_capacity(path.len());
        let climb = Leg::new(waypoints[0], launch, 0.0, Phase::Takeoff);
        let mut offset = climb.length_m;
        legs.push(climb);
        for (i, pair) in path.windows(2).enumerate() {
            let leg = Leg::new(pair[0], pair[1], offset, Phase::Enroute(i));
            offset += leg.length_m;
            legs.push(leg);
        }

        Ok(Self {
            waypoints: waypoints
                .into_iter()
                .enumerate()
                .map(|(index, position)| Waypoint { index, position })
                .collect(),
            cruise_speed_mps,
            takeoff_altitude_m,
            return_to_start,
            legs,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn cruise_speed_mps(&self) -> f64 {
        self.cruise_speed_mps
    }

    pub fn takeoff_altitude_m(&self) -> f64 {
        self.takeoff_altitude_m
    }

    pub fn return_to_start(&self) -> bool {
        self.return_to_start
    }

    /// Ground altitude at the launch point.
    pub fn ground_altitude_m(&self) -> f64 {
        self.waypoints[0].position.altitude_m()
    }

    /// Total distance flown from launch to the terminal point.
    pub fn path_length_m(&self) -> f64 {
        let last = self.legs.last().expect("plan has legs");
        last.offset_m + last.length_m
    }

    /// Where waypoint `index` is actually flown: the launch point is visited at
    /// takeoff altitude.
    pub fn path_point(&self, index: usize) -> Option<GeoPosition> {
        match index {
            0 => Some(self.legs[0].to),
            i => self.waypoints.get(i).map(|w| w.position),
        }
    }

    /// Mission time at which the open-loop trajectory first reaches the
    /// path point of waypoint `index`.
    pub fn time_at_waypoint(&self, index: usize) -> Option<f64> {
        if index >= self.waypoints.len() {
            return None;
        }
        // Leg k (k >= 1) starts at path point k - 1.
        let flown = self
            .legs
            .get(index + 1)
            .map_or_else(|| self.path_length_m(), |leg| leg.offset_m);
        Some(flown / self.cruise_speed_mps)
    }

    pub fn terminal_point(&self) -> GeoPosition {
        self.legs.last().expect("plan has legs").to
    }

    fn last_heading(&self, upto: usize) -> f64 {
        self.legs[..=upto]
            .iter()
            .rev()
            .find_map(Leg::heading_deg)
            .unwrap_or(0.0)
    }

    pub fn from_json(document: &str) -> Result<Self, PlanError> {
        let doc: PlanDocument = serde_json::from_str(document)
            .map_err(|e| PlanError::MalformedDocument(e.to_string()))?;
        Self::from_document(doc)
    }

    fn from_document(doc: PlanDocument) -> Result<Self, PlanError> {
        let speed = doc
            .cruise_speed
            .ok_or_else(|| PlanError::InvalidPlan("missing cruiseSpeed".into()))?;
        let takeoff = doc
            .takeoff_altitude
            .ok_or_else(|| PlanError::InvalidPlan("missing takeoffAltitude".into()))?;
        let waypoints = doc
            .waypoints
            .ok_or_else(|| PlanError::InvalidPlan("missing waypoints".into()))?;
        Self::new(waypoints, speed, takeoff, doc.return_to_start)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Convert a QGroundControl `.plan` document. The planned home position
    /// becomes the launch point at ground level; NAV_TAKEOFF sets the takeoff
    /// altitude; NAV_WAYPOINT items become waypoints; NAV_RETURN_TO_LAUNCH
    /// enables the return leg.
    pub fn from_qgc_plan(document: &str) -> Result<Self, PlanError> {
        const NAV_WAYPOINT: u64 = 16;
        const NAV_RETURN_TO_LAUNCH: u64 = 20;
        const NAV_TAKEOFF: u64 = 22;

        let root: serde_json::Value = serde_json::from_str(document)
            .map_err(|e| PlanError::MalformedDocument(e.to_string()))?;
        let mission = root
            .get("mission")
            .ok_or_else(|| PlanError::MalformedDocument("no `mission` object".into()))?;
        let malformed = |what: &str| PlanError::MalformedDocument(what.to_string());

        let home = mission
            .get("plannedHomePosition")
            .and_then(|v| v.as_array())
            .ok_or_else(|| malformed("missing mission.plannedHomePosition"))?;
        let home_lat = home.first().and_then(|v| v.as_f64()).ok_or_else(|| malformed("bad home latitude"))?;
        let home_lon = home.get(1).and_then(|v| v.as_f64()).ok_or_else(|| malformed("bad home longitude"))?;
        let launch = GeoPosition::new(home_lat, home_lon, 0.0)
            .map_err(|e| PlanError::InvalidPlan(e.to_string()))?;

        let speed = mission.get("cruiseSpeed").and_then(|v| v.as_f64());
        let items = mission
            .get("items")
            .and_then(|v| v.as_array())
            .ok_or_else(|| malformed("missing mission.items"))?;

        let mut takeoff = None;
        let mut return_to_start = false;
        let mut waypoints = vec![launch];
        for item in items {
            let Some(command) = item.get("command").and_then(|v| v.as_u64()) else {
                continue;
            };
            let params: Vec<Option<f64>> = item
                .get("params")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().map(|p| p.as_f64()).collect())
                .unwrap_or_default();
            let param = |i: usize| params.get(i).copied().flatten();
            match command {
                NAV_TAKEOFF => takeoff = param(6),
                NAV_RETURN_TO_LAUNCH => return_to_start = true,
                NAV_WAYPOINT => {
                    let (Some(lat), Some(lon), Some(alt)) = (param(4), param(5), param(6)) else {
                        return Err(malformed("waypoint without coordinates"));
                    };
                    waypoints.push(
                        GeoPosition::new(lat, lon, alt)
                            .map_err(|e| PlanError::InvalidPlan(e.to_string()))?,
                    );
                }
                _ => {}
            }
        }
        let takeoff = takeoff
            .or_else(|| waypoints.get(1).map(|w| w.altitude_m()))
            .ok_or_else(|| PlanError::InvalidPlan("no takeoff altitude".into()))?;
        let speed = speed.ok_or_else(|| PlanError::InvalidPlan("missing cruiseSpeed".into()))?;
        Self::new(waypoints, speed, takeoff, return_to_start)
    }
}

impl Serialize for FlightPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PlanDocument {
            cruise_speed: Some(self.cruise_speed_mps),
            takeoff_altitude: Some(self.takeoff_altitude_m),
            return_to_start: self.return_to_start,
            waypoints: Some(self.waypoints.iter().map(|w| w.position).collect()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FlightPlan {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = PlanDocument::deserialize(deserializer)?;
        FlightPlan::from_document(doc).map_err(serde::de::Error::custom)
    }
}

/// Open-loop position after `t` seconds of mission time.
pub fn position_at(plan: &FlightPlan, t: f64) -> VehicleState {
    let t = t.max(0.0);
    let flown = t * plan.cruise_speed_mps;
    let total = plan.path_length_m();
    if flown >= total {
        return VehicleState {
            position: plan.terminal_point(),
            phase: Phase::Landed,
            mission_time_s: t,
            heading_deg: plan.last_heading(plan.legs.len() - 1),
        };
    }
    // Last leg starting at or before `flown`, skipping zero-length legs.
    let idx = plan
        .legs
        .iter()
        .rposition(|leg| leg.offset_m <= flown && leg.length_m > 0.0)
        .unwrap_or(0);
    let leg = &plan.legs[idx];
    VehicleState {
        position: leg.point(flown - leg.offset_m),
        phase: leg.phase,
        mission_time_s: t,
        heading_deg: plan.last_heading(idx),
    }
}

pub fn mission_duration(plan: &FlightPlan) -> f64 {
    plan.path_length_m() / plan.cruise_speed_mps
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManeuverError {
    #[error("vehicle is not idle")]
    NotIdle,
    #[error("vehicle is not airborne")]
    NotAirborne,
    #[error("vehicle is not holding")]
    NotHolding,
    #[error("vehicle is already holding")]
    AlreadyHolding,
    #[error("vehicle has landed")]
    Landed,
    #[error("no waypoint {0} in plan")]
    NoSuchWaypoint(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Mode {
    Idle,
    Mission { clock_s: f64 },
    Direct { leg: Leg, flown_m: f64, target: usize },
    Landing { leg: Leg, flown_m: f64 },
    Hold { resume: Box<Mode> },
    Landed,
}

/// Closed-loop vehicle: follows the plan but accepts operator commands.
#[derive(Debug, Clone)]
pub struct Vehicle {
    plan: FlightPlan,
    mode: Mode,
    state: VehicleState,
}

impl Vehicle {
    /// A vehicle sitting at the launch point. With `auto_start` it begins the
    /// mission immediately, otherwise it waits for [`Vehicle::takeoff`].
    pub fn new(plan: FlightPlan, auto_start: bool) -> Self {
        let state = if auto_start {
            position_at(&plan, 0.0)
        } else {
            VehicleState {
                position: plan.waypoints[0].position,
                phase: Phase::Idle,
                mission_time_s: 0.0,
                heading_deg: 0.0,
            }
        };
        let mode = if auto_start {
            Mode::Mission { clock_s: 0.0 }
        } else {
            Mode::Idle
        };
        Self { plan, mode, state }
    }

    pub fn plan(&self) -> &FlightPlan {
        &self.plan
    }

    pub fn state(&self) -> VehicleState {
        self.state
    }

    pub fn is_holding(&self) -> bool {
        matches!(self.mode, Mode::Hold { .. })
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Idle => "Idle",
            Mode::Mission { .. } => "Mission",
            Mode::Direct { .. } => "Goto",
            Mode::Landing { .. } => "Landing",
            Mode::Hold { .. } => "Hold",
            Mode::Landed => "Landed",
        }
    }

    /// Advance the vehicle by `dt_s` seconds.
    pub fn advance(&mut self, dt_s: f64) {
        self.state.mission_time_s += dt_s;
        let mut remaining = dt_s;
        // A mode change mid-step carries the leftover time into the next mode.
        while remaining > 0.0 {
            remaining = self.step_mode(remaining);
        }
    }

    fn step_mode(&mut self, dt: f64) -> f64 {
        let speed = self.plan.cruise_speed_mps;
        match &mut self.mode {
            Mode::Idle | Mode::Hold { .. } | Mode::Landed => 0.0,
            Mode::Mission { clock_s } => {
                *clock_s += dt;
                let s = position_at(&self.plan, *clock_s);
                self.state.position = s.position;
                self.state.phase = s.phase;
                self.state.heading_deg = s.heading_deg;
                if s.phase == Phase::Landed {
                    self.mode = Mode::Landed;
                }
                0.0
            }
            Mode::Direct {
                leg,
                flown_m,
                target,
            } => {
                *flown_m += speed * dt;
                if *flown_m >= leg.length_m {
                    let leftover = (*flown_m - leg.length_m) / speed;
                    let clock_s = self
                        .plan
                        .time_at_waypoint(*target)
                        .expect("goto target validated");
                    self.state.position = leg.to;
                    self.mode = Mode::Mission { clock_s };
                    leftover
                } else {
                    self.state.position = leg.point(*flown_m);
                    0.0
                }
            }
            Mode::Landing { leg, flown_m } => {
                *flown_m += speed * dt;
                if *flown_m >= leg.length_m {
                    self.state.position = leg.to;
                    self.state.phase = Phase::Landed;
                    self.mode = Mode::Landed;
                } else {
                    self.state.position = leg.point(*flown_m);
                }
                0.0
            }
        }
    }

    pub fn takeoff(&mut self) -> Result<(), ManeuverError> {
        if self.mode != Mode::Idle {
            return Err(ManeuverError::NotIdle);
        }
        self.mode = Mode::Mission { clock_s: 0.0 };
        self.state.phase = Phase::Takeoff;
        Ok(())
    }

    pub fn hold(&mut self) -> Result<(), ManeuverError> {
        match self.mode {
            Mode::Idle => Err(ManeuverError::NotAirborne),
            Mode::Landed => Err(ManeuverError::Landed),
            Mode::Hold { .. } => Err(ManeuverError::AlreadyHolding),
            _ => {
                let resume = Box::new(std::mem::replace(&mut self.mode, Mode::Idle));
                self.mode = Mode::Hold { resume };
                Ok(())
            }
        }
    }

    pub fn resume(&mut self) -> Result<(), ManeuverError> {
        match std::mem::replace(&mut self.mode, Mode::Idle) {
            Mode::Hold { resume } => {
                self.mode = *resume;
                Ok(())
            }
            other => {
                self.mode = other;
                Err(ManeuverError::NotHolding)
            }
        }
    }

    /// Fly straight to waypoint `index` at cruise speed, then continue the
    /// mission from there.
    pub fn goto(&mut self, index: usize) -> Result<(), ManeuverError> {
        let target = self
            .plan
            .path_point(index)
            .ok_or(ManeuverError::NoSuchWaypoint(index))?;
        match self.mode {
            Mode::Idle => return Err(ManeuverError::NotAirborne),
            Mode::Landed => return Err(ManeuverError::Landed),
            _ => {}
        }
        let leg = Leg::new(self.state.position, target, 0.0, Phase::Enroute(index));
        if let Some(h) = leg.heading_deg() {
            self.state.heading_deg = h;
        }
        self.state.phase = leg.phase;
        self.mode = Mode::Direct {
            leg,
            flown_m: 0.0,
            target: index,
        };
        Ok(())
    }

    /// Descend vertically to ground level at cruise speed.
    pub fn land(&mut self) -> Result<(), ManeuverError> {
        match self.mode {
            Mode::Idle => return Err(ManeuverError::NotAirborne),
            Mode::Landed => return Err(ManeuverError::Landed),
            _ => {}
        }
        self.begin_descent();
        Ok(())
    }

    /// Drop the mission and land where the vehicle is. Never resumable.
    pub fn abort(&mut self) -> Result<(), ManeuverError> {
        match self.mode {
            Mode::Landed => Err(ManeuverError::Landed),
            Mode::Idle => {
                self.mode = Mode::Landed;
                self.state.phase = Phase::Landed;
                Ok(())
            }
            Mode::Landing { .. } => Ok(()),
            _ => {
                self.begin_descent();
                Ok(())
            }
        }
    }

    fn begin_descent(&mut self) {
        let ground = self
            .state
            .position
            .with_altitude(self.plan.ground_altitude_m().min(self.state.position.altitude_m()))
            .expect("current position is valid");
        self.mode = Mode::Landing {
            leg: Leg::new(self.state.position, ground, 0.0, Phase::Landing),
            flown_m: 0.0,
        };
        self.state.phase = Phase::Landing;
    }
}
