//! Episode trace: one CSV row per (step, agent).

use std::io::{BufRead, Write};

use super::world::{AgentRecord, StepOutcome};
use super::{AgentId, AgentKind, Outcome, RewardLedger};
use crate::dynamics::{Signal, VehicleState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub id: AgentId,
    pub kind: AgentKind,
    pub state: VehicleState,
    pub length: f64,
    pub width: f64,
    pub accel: f64,
    pub steer: f64,
    pub signal: Signal,
    pub reward: Option<RewardLedger>,
    pub outcome: Option<Outcome>,
}

impl TraceRow {
    pub(crate) fn from_agent(step: u64, a: &AgentRecord, o: &StepOutcome) -> Self {
        Self {
            step,
            id: a.id,
            kind: a.kind,
            state: a.state,
            length: a.geom.length,
            width: a.geom.width,
            accel: o.control.accel,
            steer: o.control.steer,
            signal: o.control.signal,
            reward: o.reward,
            outcome: o.outcome,
        }
    }
}

const HEADER: &str = "step,id,kind,x,y,psi,v,length,width,accel,steer,signal,\
r_success,r_collision,r_oob,r_velocity,r_signal,r_center_offset,r_steer_smooth,r_total,event";

fn signal_name(s: Signal) -> &'static str {
    match s {
        Signal::Off => "off",
        Signal::Left => "left",
        Signal::Right => "right",
    }
}

/// Writes rows with a header. Floats use Rust's shortest round-trip formatting,
/// so reading the file back reproduces every value exactly.
pub fn write_trace<W: Write>(rows: &[TraceRow], mut sink: W) -> Result<()> {
    writeln!(sink, "{HEADER}")?;
    for r in rows {
        let s = &r.state;
        write!(
            sink,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.step,
            r.id,
            r.kind,
            s.x,
            s.y,
            s.psi,
            s.v,
            r.length,
            r.width,
            r.accel,
            r.steer,
            signal_name(r.signal)
        )?;
        match &r.reward {
            Some(l) => {
                for c in l.components() {
                    write!(sink, ",{c:?}")?;
                }
                write!(sink, ",{:?}", l.total())?;
            }
            None => write!(sink, ",,,,,,,,")?,
        }
        writeln!(sink, ",{}", r.outcome.map(Outcome::name).unwrap_or(""))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(source: R) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        if idx == 0 {
            if line.trim() != HEADER {
                return Err(Error::parse(n, "unexpected trace header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 21 {
            return Err(Error::parse(n, format!("expected 21 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> { f[i].parse().map_err(|_| Error::parse(n, format!("bad number {:?}", f[i]))) };
        let int = |i: usize| -> Result<u64> { f[i].parse().map_err(|_| Error::parse(n, format!("bad integer {:?}", f[i]))) };
        let signal = match f[11] {
            "off" => Signal::Off,
            "left" => Signal::Left,
            "right" => Signal::Right,
            s => return Err(Error::parse(n, format!("bad signal {s:?}"))),
        };
        let reward = if f[12].is_empty() {
            None
        } else {
            Some(RewardLedger {
                success: num(12)?,
                collision: num(13)?,
                oob: num(14)?,
                velocity: num(15)?,
                signal: num(16)?,
                center_offset: num(17)?,
                steer_smooth: num(18)?,
            })
        };
        let outcome = match f[20] {
            "" => None,
            s => Some(Outcome::from_name(s).ok_or_else(|| Error::parse(n, format!("bad event {s:?}")))?),
        };
        rows.push(TraceRow {
            step: int(0)?,
            id: int(1)? as AgentId,
            kind: f[2].parse().map_err(|_| Error::parse(n, "bad kind"))?,
            state: VehicleState { x: num(3)?, y: num(4)?, psi: num(5)?, v: num(6)? },
            length: num(7)?,
            width: num(8)?,
            accel: num(9)?,
            steer: num(10)?,
            signal,
            reward,
            outcome,
        });
    }
    Ok(rows)
}
