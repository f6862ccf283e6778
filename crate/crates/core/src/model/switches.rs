//! Non-smooth decisions of a forward pass: ReLU sides, max-pool winners and the
//! pooling variance floor.
//!
//! The loss is piecewise smooth in the parameters. Recording the decisions at one
//! point and replaying them elsewhere evaluates the smooth piece that contains the
//! recorded point, extended past its boundaries.

/// Decisions recorded during one forward pass, in evaluation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Switches {
    active: Vec<bool>,
    winners: Vec<u32>,
}

impl Switches {
    /// Number of recorded binary decisions (ReLU sides and variance floors).
    pub fn num_gates(&self) -> usize {
        self.active.len()
    }

    pub fn num_winners(&self) -> usize {
        self.winners.len()
    }
}

#[derive(Debug, Default)]
pub(crate) enum Tape {
    #[default]
    Off,
    Record(Switches),
    Replay {
        sw: Switches,
        gate: usize,
        winner: usize,
    },
}

impl Tape {
    pub fn replay(sw: Switches) -> Self {
        Tape::Replay { sw, gate: 0, winner: 0 }
    }

    /// Decide one binary switch: `natural` is the decision the inputs call for.
    pub fn gate(&mut self, natural: bool) -> bool {
        match self {
            Tape::Off => natural,
            Tape::Record(sw) => {
                sw.active.push(natural);
                natural
            }
            Tape::Replay { sw, gate, .. } => {
                let d = *sw.active.get(*gate).expect("replayed switches come from the same network and batch");
                *gate += 1;
                d
            }
        }
    }

    pub fn winner(&mut self, natural: u32) -> u32 {
        match self {
            Tape::Off => natural,
            Tape::Record(sw) => {
                sw.winners.push(natural);
                natural
            }
            Tape::Replay { sw, winner, .. } => {
                let d = *sw.winners.get(*winner).expect("replayed switches come from the same network and batch");
                *winner += 1;
                d
            }
        }
    }

    /// ReLU in place. On replay, units recorded as active pass their input through
    /// unchanged even when it is negative.
    pub fn relu(&mut self, v: &mut [f64]) {
        if let Tape::Off = self {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
            return;
        }
        for x in v {
            if !self.gate(*x > 0.0) {
                *x = 0.0;
            }
        }
    }

    pub fn into_switches(self) -> Option<Switches> {
        match self {
            Tape::Record(sw) => Some(sw),
            _ => None,
        }
    }
}
