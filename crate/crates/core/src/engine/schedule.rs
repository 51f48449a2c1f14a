use crate::error::{Error, Result};
use crate::harness::trace::EventKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub step: u64,
    pub kind: EventKind,
}

/// Review takes precedence over Chat; everything else repeats the current batch.
pub fn classify_step(step: u64, chat: u64, review: u64) -> StepEvent {
    Schedule::new(chat, Some(review)).classify(step)
}

/// Chat and review intervals. With `review == None` review steps fall
/// through to the Chat/Repeat branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    chat: u64,
    review: Option<u64>,
}

impl Schedule {
    pub fn new(chat: u64, review: Option<u64>) -> Self {
        assert!(chat > 0 && review != Some(0), "intervals must be positive");
        Self { chat, review }
    }

    pub fn classify(&self, step: u64) -> StepEvent {
        let kind = match self.review {
            Some(r) if step.is_multiple_of(r) => EventKind::Review,
            _ if step.is_multiple_of(self.chat) => EventKind::Chat,
            _ => EventKind::Repeat,
        };
        StepEvent { step, kind }
    }

    /// Number of Chat events in steps `1..=num_steps`.
    pub fn chat_count(&self, num_steps: u64) -> u64 {
        let chats = num_steps / self.chat;
        match self.review {
            Some(r) => {
                let l = lcm(self.chat, r);
                chats - num_steps / l
            }
            None => chats,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// `(floor(b/2), ceil(b/2))` easy and hard samples per generated batch.
pub fn batch_split(b: usize) -> Result<(usize, usize)> {
    if b < 1 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok((b / 2, b.div_ceil(2)))
}
