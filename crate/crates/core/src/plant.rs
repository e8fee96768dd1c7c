//! Deterministic shop-floor simulation: four stations, workpieces, a drill
//! with a PackML-like state machine and a mobile robot.
//!
//! Time is logical. Nothing here reads a wall clock; the clock only moves
//! when [`Plant::advance`] is called or the robot travels.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const DRILL_JOB_MS: u64 = 2000;
pub const ROBOT_HOP_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Station {
    Storage,
    DrillStation,
    AssemblyStation,
    Dock,
}

impl Station {
    pub const ALL: [Station; 4] = [Station::Storage, Station::DrillStation, Station::AssemblyStation, Station::Dock];

    pub fn as_str(self) -> &'static str {
        match self {
            Station::Storage => "storage",
            Station::DrillStation => "drill_station",
            Station::AssemblyStation => "assembly_station",
            Station::Dock => "dock",
        }
    }

    pub fn parse(s: &str) -> Option<Station> {
        Station::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a workpiece is: at a station, or on the robot while it travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    At(Station),
    OnRobot,
}

impl Location {
    pub fn as_str(self) -> &'static str {
        match self {
            Location::At(s) => s.as_str(),
            Location::OnRobot => "robot",
        }
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "robot" {
            return Ok(Location::OnRobot);
        }
        Station::parse(&s)
            .map(Location::At)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown location `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub diameter_mm: f64,
    pub rpm_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workpiece {
    pub id: String,
    pub material: String,
    pub location: Location,
    pub holes: Vec<Hole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub location: Station,
    pub carrying: Option<String>,
    pub active_goal: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DrillState {
    Idle,
    Starting,
    Executing,
    Completing,
    Complete,
    Error,
}

impl DrillState {
    pub fn as_str(self) -> &'static str {
        match self {
            DrillState::Idle => "Idle",
            DrillState::Starting => "Starting",
            DrillState::Executing => "Executing",
            DrillState::Completing => "Completing",
            DrillState::Complete => "Complete",
            DrillState::Error => "Error",
        }
    }

    pub fn can_transition(self, to: DrillState) -> bool {
        use DrillState::*;
        matches!(
            (self, to),
            (Idle, Starting)
                | (Starting, Executing)
                | (Executing, Completing)
                | (Completing, Complete)
                | (Complete, Idle)
                | (Error, Idle)
                | (_, Error)
        )
    }

    /// States in which a job holds the drill.
    pub fn is_active(self) -> bool {
        matches!(self, DrillState::Starting | DrillState::Executing | DrillState::Completing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillJob {
    pub workpiece: String,
    pub rpm: u32,
    pub diameter_mm: f64,
    pub ends_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillMachine {
    pub state: DrillState,
    pub current_job: Option<DrillJob>,
    pub last_error: Option<String>,
}

impl Default for DrillMachine {
    fn default() -> Self {
        Self {
            state: DrillState::Idle,
            current_job: None,
            last_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub workpieces: BTreeMap<String, Workpiece>,
    pub robot: Robot,
    pub drill: DrillMachine,
    pub clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkpieceSetup {
    pub id: String,
    pub material: String,
    pub location: Station,
}

/// Initial placement of workpieces and the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLayout {
    pub workpieces: Vec<WorkpieceSetup>,
    #[serde(default = "default_robot_station")]
    pub robot_at: Station,
}

fn default_robot_station() -> Station {
    Station::Dock
}

impl Default for PlantLayout {
    /// `wp1` (steel) at the drill station, robot docked.
    fn default() -> Self {
        Self {
            workpieces: alloc::vec![WorkpieceSetup {
                id: "wp1".into(),
                material: "steel".into(),
                location: Station::DrillStation,
            }],
            robot_at: Station::Dock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("workpiece_not_present")]
    WorkpieceNotPresent,
    #[error("busy")]
    Busy,
    #[error("invalid_rpm")]
    InvalidRpm,
    #[error("illegal_transition")]
    IllegalTransition,
    #[error("unknown_workpiece")]
    UnknownWorkpiece,
    #[error("unknown_station")]
    UnknownStation,
}

impl Rejection {
    /// Wire-level reason, identical to the `Display` output.
    pub fn reason(self) -> &'static str {
        match self {
            Rejection::WorkpieceNotPresent => "workpiece_not_present",
            Rejection::Busy => "busy",
            Rejection::InvalidRpm => "invalid_rpm",
            Rejection::IllegalTransition => "illegal_transition",
            Rejection::UnknownWorkpiece => "unknown_workpiece",
            Rejection::UnknownStation => "unknown_station",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrillTransition {
    pub from: DrillState,
    pub to: DrillState,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportPhase {
    Moving,
    Picked,
    Placed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportFeedback {
    pub phase: TransportPhase,
    pub position: Station,
    pub clock_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportOutcome {
    Delivered(Station),
    /// The workpiece already was at the target.
    NoOp(Station),
}

#[derive(Debug, Clone)]
pub struct Plant {
    state: PlantState,
    transitions: Vec<DrillTransition>,
    next_goal: u64,
}

impl Plant {
    pub fn new(layout: &PlantLayout) -> Self {
        let workpieces = layout
            .workpieces
            .iter()
            .map(|w| {
                let wp = Workpiece {
                    id: w.id.clone(),
                    material: w.material.clone(),
                    location: Location::At(w.location),
                    holes: Vec::new(),
                };
                (w.id.clone(), wp)
            })
            .collect();
        Self {
            state: PlantState {
                workpieces,
                robot: Robot {
                    location: layout.robot_at,
                    carrying: None,
                    active_goal: None,
                },
                drill: DrillMachine::default(),
                clock_ms: 0,
            },
            transitions: Vec::new(),
            next_goal: 1,
        }
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn clock_ms(&self) -> u64 {
        self.state.clock_ms
    }

    pub fn drill(&self) -> &DrillMachine {
        &self.state.drill
    }

    pub fn workpiece(&self, id: &str) -> Option<&Workpiece> {
        self.state.workpieces.get(id)
    }

    /// Every drill state change so far, in order.
    pub fn transitions(&self) -> &[DrillTransition] {
        &self.transitions
    }

    fn set_drill_state(&mut self, to: DrillState) {
        let from = self.state.drill.state;
        debug_assert!(from.can_transition(to), "illegal drill transition {from:?} -> {to:?}");
        self.state.drill.state = to;
        self.transitions.push(DrillTransition {
            from,
            to,
            at_ms: self.state.clock_ms,
        });
    }

    pub fn drill_start(&mut self, workpiece: &str, rpm: i64, diameter_mm: f64) -> Result<(), Rejection> {
        if self.state.drill.state != DrillState::Idle {
            return Err(Rejection::Busy);
        }
        if rpm <= 0 || rpm > i64::from(u32::MAX) {
            return Err(Rejection::InvalidRpm);
        }
        match self.state.workpieces.get(workpiece) {
            Some(wp) if wp.location == Location::At(Station::DrillStation) => {}
            _ => return Err(Rejection::WorkpieceNotPresent),
        }
        self.state.drill.last_error = None;
        self.state.drill.current_job = Some(DrillJob {
            workpiece: workpiece.to_string(),
            rpm: rpm as u32,
            diameter_mm,
            ends_at_ms: self.state.clock_ms + DRILL_JOB_MS,
        });
        self.set_drill_state(DrillState::Starting);
        self.set_drill_state(DrillState::Executing);
        Ok(())
    }

    pub fn drill_reset(&mut self) -> Result<(), Rejection> {
        match self.state.drill.state {
            DrillState::Complete | DrillState::Error => {
                self.state.drill.current_job = None;
                self.set_drill_state(DrillState::Idle);
                Ok(())
            }
            _ => Err(Rejection::IllegalTransition),
        }
    }

    /// Moves the logical clock forward and lets a running drill job finish.
    pub fn advance(&mut self, ms: u64) {
        self.state.clock_ms = self.state.clock_ms.saturating_add(ms);
        let done = match &self.state.drill.current_job {
            Some(job) => self.state.drill.state == DrillState::Executing && self.state.clock_ms >= job.ends_at_ms,
            None => false,
        };
        if done {
            self.set_drill_state(DrillState::Completing);
            if let Some(job) = &self.state.drill.current_job {
                if let Some(wp) = self.state.workpieces.get_mut(&job.workpiece) {
                    wp.holes.push(Hole {
                        diameter_mm: job.diameter_mm,
                        rpm_used: job.rpm,
                    });
                }
            }
            self.set_drill_state(DrillState::Complete);
        }
    }

    fn abort_drill_if_holding(&mut self, workpiece: &str) {
        let holding = self.state.drill.state.is_active()
            && self.state.drill.current_job.as_ref().is_some_and(|j| j.workpiece == workpiece);
        if holding {
            self.state.drill.current_job = None;
            self.state.drill.last_error = Some("workpiece_removed".into());
            self.set_drill_state(DrillState::Error);
        }
    }

    /// Runs one transport goal to completion. Each hop between two stations
    /// takes [`ROBOT_HOP_MS`]; `feedback` sees every intermediate position.
    pub fn robot_transport(
        &mut self,
        workpiece: &str,
        to: &str,
        mut feedback: impl FnMut(TransportFeedback),
    ) -> Result<TransportOutcome, Rejection> {
        if self.state.robot.active_goal.is_some() {
            return Err(Rejection::Busy);
        }
        let target = Station::parse(to).ok_or(Rejection::UnknownStation)?;
        let from = match self.state.workpieces.get(workpiece) {
            None => return Err(Rejection::UnknownWorkpiece),
            Some(wp) => match wp.location {
                Location::At(s) => s,
                Location::OnRobot => return Err(Rejection::Busy),
            },
        };
        if from == target {
            return Ok(TransportOutcome::NoOp(target));
        }

        let goal = self.next_goal;
        self.next_goal += 1;
        self.state.robot.active_goal = Some(goal);

        if self.state.robot.location != from {
            self.hop(from, &mut feedback);
        }
        self.abort_drill_if_holding(workpiece);
        if let Some(wp) = self.state.workpieces.get_mut(workpiece) {
            wp.location = Location::OnRobot;
        }
        self.state.robot.carrying = Some(workpiece.to_string());
        feedback(self.feedback(TransportPhase::Picked));

        self.hop(target, &mut feedback);
        if let Some(wp) = self.state.workpieces.get_mut(workpiece) {
            wp.location = Location::At(target);
        }
        self.state.robot.carrying = None;
        self.state.robot.active_goal = None;
        feedback(self.feedback(TransportPhase::Placed));
        Ok(TransportOutcome::Delivered(target))
    }

    fn hop(&mut self, to: Station, feedback: &mut impl FnMut(TransportFeedback)) {
        self.advance(ROBOT_HOP_MS);
        self.state.robot.location = to;
        feedback(self.feedback(TransportPhase::Moving));
    }

    fn feedback(&self, phase: TransportPhase) -> TransportFeedback {
        TransportFeedback {
            phase,
            position: self.state.robot.location,
            clock_ms: self.state.clock_ms,
        }
    }
}
