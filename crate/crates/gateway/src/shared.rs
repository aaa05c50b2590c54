//! State shared between the orchestrator loop and the HTTP handlers.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use sb_core::control::ComfortBounds;
use sb_core::topology::BuildingTopology;
use sb_telemetry::{TelemetryRecord, TelemetryStore};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::scenario::Request;

pub const DIAGNOSTICS_KEPT: usize = 2000;
pub const STREAM_BATCHES: usize = 64;

pub type Batch = Arc<[TelemetryRecord]>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStatus {
    pub scenario: String,
    pub tick: u64,
    pub time_s: f64,
    pub ticks_total: u64,
    pub paused: bool,
    pub finished: bool,
}

#[derive(Debug, Default)]
struct Gate {
    paused: bool,
    steps: u64,
    stopped: bool,
}

/// Handle on a live run: request inbox and pause/step gate.
#[derive(Debug, Default)]
pub struct RunControl {
    inbox: Mutex<Vec<Request>>,
    gate: Mutex<Gate>,
    cv: Condvar,
}

impl RunControl {
    pub fn submit(&self, r: Request) {
        self.inbox.lock().expect("inbox lock").push(r);
    }

    pub fn take_requests(&self) -> Vec<Request> {
        std::mem::take(&mut *self.inbox.lock().expect("inbox lock"))
    }

    pub fn pause(&self) {
        let mut g = self.gate.lock().expect("gate lock");
        g.paused = true;
        g.steps = 0;
    }

    pub fn resume(&self) {
        self.gate.lock().expect("gate lock").paused = false;
        self.cv.notify_all();
    }

    /// Lets a paused run advance `n` more ticks.
    pub fn step(&self, n: u64) {
        self.gate.lock().expect("gate lock").steps += n;
        self.cv.notify_all();
    }

    pub fn stop(&self) {
        self.gate.lock().expect("gate lock").stopped = true;
        self.cv.notify_all();
    }

    pub fn is_paused(&self) -> bool {
        self.gate.lock().expect("gate lock").paused
    }

    /// Blocks while paused with no step budget. False once stopped.
    pub fn wait_turn(&self) -> bool {
        let mut g = self.gate.lock().expect("gate lock");
        while g.paused && g.steps == 0 && !g.stopped {
            g = self.cv.wait(g).expect("gate lock");
        }
        if g.stopped {
            return false;
        }
        if g.paused {
            g.steps -= 1;
        }
        true
    }
}

pub struct Shared {
    pub topology: Arc<BuildingTopology>,
    pub comfort: ComfortBounds,
    pub dt_s: f64,
    pub store: RwLock<TelemetryStore>,
    pub stream: broadcast::Sender<Batch>,
    pub diagnostics: Mutex<VecDeque<String>>,
    pub status: Mutex<RunStatus>,
    /// Present while a simulation is attached.
    pub control: Option<Arc<RunControl>>,
    live: AtomicBool,
}

impl Shared {
    pub fn new(
        topology: Arc<BuildingTopology>,
        comfort: ComfortBounds,
        dt_s: f64,
        store: TelemetryStore,
        control: Option<Arc<RunControl>>,
    ) -> Self {
        let (stream, _) = broadcast::channel(STREAM_BATCHES);
        let live = control.is_some();
        Self {
            topology,
            comfort,
            dt_s,
            store: RwLock::new(store),
            stream,
            diagnostics: Mutex::new(VecDeque::new()),
            status: Mutex::new(RunStatus::default()),
            control,
            live: AtomicBool::new(live),
        }
    }

    pub fn is_live(&self) -> bool {
        self.live.load(Ordering::SeqCst)
    }

    pub fn set_finished(&self) {
        self.live.store(false, Ordering::SeqCst);
        self.status.lock().expect("status lock").finished = true;
    }

    pub fn push_diagnostic(&self, line: String) {
        let mut d = self.diagnostics.lock().expect("diagnostics lock");
        if d.len() == DIAGNOSTICS_KEPT {
            d.pop_front();
        }
        d.push_back(line);
    }
}
