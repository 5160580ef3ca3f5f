//! Wall-clock paced simulation for live sessions.
//!
//! The simulation task owns the [`Simulation`] and talks to socket handlers
//! through two queues: operator inputs in (unbounded, drained every wake) and
//! protocol messages out (broadcast; slow subscribers skip frames). Neither
//! side ever waits on the other.

use std::time::Duration;

use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;
use tokio::time::{Instant, MissedTickBehavior};

use teleop_core::protocol::{EventKind, Message, OperatorInput};
use teleop_core::scenario::{ScenarioConfig, Simulation};

/// Wake period of the pacing loop.
const WAKE: Duration = Duration::from_millis(2);
/// Most simulated time advanced in one wake before the loop gives up on
/// catching up and rebases its clock.
const MAX_CATCH_UP: f64 = 0.25;

#[derive(Debug)]
pub(crate) enum SessionInput {
    Operator(OperatorInput),
    ClientJoined,
    ClientLeft,
}

/// Handle to a running live session. Dropping it stops the simulation.
#[derive(Debug)]
pub struct LiveSession {
    inputs: mpsc::UnboundedSender<SessionInput>,
    frames: broadcast::Sender<Message>,
    scenario: ScenarioConfig,
    task: JoinHandle<()>,
}

impl LiveSession {
    /// Starts the paced loop. Must be called inside a tokio runtime.
    pub fn start(cfg: ScenarioConfig) -> teleop_core::Result<Self> {
        let mut sim = Simulation::new(cfg.clone())?;
        sim.set_recording(false);
        let (in_tx, in_rx) = mpsc::unbounded_channel();
        let (frames, _) = broadcast::channel(1024);
        let task = tokio::spawn(run(sim, in_rx, frames.clone()));
        Ok(LiveSession {
            inputs: in_tx,
            frames,
            scenario: cfg,
            task,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub(crate) fn subscribe(&self) -> broadcast::Receiver<Message> {
        self.frames.subscribe()
    }

    pub(crate) fn send(&self, input: SessionInput) {
        // only fails once the loop has stopped, which it reports itself
        let _ = self.inputs.send(input);
    }
}

impl Drop for LiveSession {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn run(
    mut sim: Simulation,
    mut inputs: mpsc::UnboundedReceiver<SessionInput>,
    out: broadcast::Sender<Message>,
) {
    let rate = sim.config().tick_rate;
    let decimation = (rate / sim.config().frame_rate).round().max(1.0) as u64;
    let mut clients = 0usize;
    let mut left_alone = false;
    let mut epoch = Instant::now();
    let mut epoch_tick = 0u64;
    let mut wake = tokio::time::interval(WAKE);
    wake.set_missed_tick_behavior(MissedTickBehavior::Skip);

    loop {
        wake.tick().await;
        while let Ok(input) = inputs.try_recv() {
            match input {
                SessionInput::Operator(i) => sim.set_operator_input(i.into()),
                SessionInput::ClientJoined => {
                    clients += 1;
                    if left_alone {
                        left_alone = false;
                        let ev = sim.note_event(EventKind::Reconnect);
                        let _ = out.send(Message::Event(ev));
                    }
                }
                SessionInput::ClientLeft => {
                    clients = clients.saturating_sub(1);
                    if clients == 0 {
                        // keep running on the last input held
                        left_alone = true;
                        let ev = sim.note_event(EventKind::Disconnect);
                        tracing::info!(t = ev.t, "operator disconnected, holding last input");
                        let _ = out.send(Message::Event(ev));
                    }
                }
            }
        }

        let due = epoch_tick + (epoch.elapsed().as_secs_f64() * rate) as u64 + 1;
        let budget = (MAX_CATCH_UP * rate) as u64;
        if due.saturating_sub(sim.tick()) > budget {
            tracing::warn!(
                behind = due - sim.tick(),
                "live loop cannot keep up, rebasing clock"
            );
            epoch = Instant::now();
            epoch_tick = sim.tick();
        }
        let target = due.min(sim.tick() + budget);
        while sim.tick() < target {
            let k = sim.tick();
            match sim.step() {
                Ok(tick) => {
                    for ev in tick.events {
                        let _ = out.send(Message::Event(ev));
                    }
                    if k.is_multiple_of(decimation) {
                        let _ = out.send(Message::StateFrame(tick.frame));
                    }
                }
                Err(e) => {
                    tracing::error!(error = %e, "live simulation stopped");
                    let _ = out.send(Message::error(format!("simulation stopped: {e}")));
                    return;
                }
            }
        }
    }
}
