//! Streams a recorded log back as state frames at (scaled) wall-clock pace.

use std::time::Duration;

use teleop_core::protocol::{Event, EventKind, Message, StateFrame};
use teleop_core::scenario::LogRow;

/// Frames per second of replayed time.
const FRAME_RATE: f64 = 60.0;

/// One item of a replay stream and when (relative to its start) to send it.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Scheduled {
    pub at: Duration,
    pub message: Message,
}

/// Frames and bond-break events for `rows`, decimated to about 60 frames
/// per second of log time. The last row always yields a frame.
pub(crate) fn schedule(rows: &[LogRow], speed: f64) -> Vec<Scheduled> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let at = |t: f64| Duration::from_secs_f64(((t - first.t) / speed).max(0.0));
    let mut out = Vec::new();
    let mut frames = 0u64;
    let mut next_frame = first.t;
    for (k, r) in rows.iter().enumerate() {
        if k > 0 && rows[k - 1].bond_attached && !r.bond_attached {
            out.push(Scheduled {
                at: at(r.t),
                message: Message::Event(Event {
                    kind: EventKind::BondBreak,
                    t: r.t,
                }),
            });
        }
        if r.t >= next_frame || k + 1 == rows.len() {
            // anchored to the start so the grid does not stretch the period
            while next_frame <= r.t {
                frames += 1;
                next_frame = first.t + frames as f64 / FRAME_RATE;
            }
            out.push(Scheduled {
                at: at(r.t),
                message: Message::StateFrame(frame(r)),
            });
        }
    }
    out
}

fn frame(r: &LogRow) -> StateFrame {
    StateFrame {
        t: r.t,
        x_r: r.x_r.into(),
        x_d: r.x_d.into(),
        f_r: r.f_ext.into(),
        // the log does not record the master force or the link delay
        f_master: [0.0; 3],
        bond: r.bond_attached,
        delay: 0.0,
    }
}
