use super::MitmRule;
use super::Transform;
use crate::tagbus::TagValue;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::collections::VecDeque;

type Frame = BTreeMap<String, TagValue>;

/// In-process man-in-the-middle on the PLC-to-historian poll link.
/// With no rules and no modes armed, frames pass through untouched.
///
/// Replay re-emits the recorded frames' values verbatim but restamps them
/// at delivery time: the historian keys on producer timestamps and would
/// otherwise discard the stale frames, which is exactly what a replay
/// attacker must defeat.
pub struct LinkInterposer {
    rules: Vec<MitmRule>,
    mitm_active: bool,
    dos: Option<(f64, u64)>,
    recording_until_ms: Option<u64>,
    recorded: Vec<Frame>,
    replay_queue: VecDeque<Frame>,
    delayed: VecDeque<(u64, Frame)>,
    rng: ChaCha8Rng,
}

impl LinkInterposer {
    pub fn new(seed: u64) -> Self {
        LinkInterposer {
            rules: Vec::new(),
            mitm_active: false,
            dos: None,
            recording_until_ms: None,
            recorded: Vec::new(),
            replay_queue: VecDeque::new(),
            delayed: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x4c49_4e4b),
        }
    }

    pub fn start_mitm(&mut self, rules: Vec<MitmRule>) {
        self.rules = rules;
        self.mitm_active = true;
    }

    pub fn stop_mitm(&mut self) {
        self.rules.clear();
        self.mitm_active = false;
    }

    pub fn mitm_active(&self) -> bool {
        self.mitm_active
    }

    /// Adds a rewrite rule to an already-active MITM session.
    pub fn add_rule(&mut self, rule: MitmRule) -> bool {
        if !self.mitm_active {
            return false;
        }
        self.rules.push(rule);
        true
    }

    /// Drops rules targeting a specific tag (wildcard rules stay).
    pub fn remove_rules_for(&mut self, tag: &str) {
        self.rules.retain(|r| r.tag != tag);
    }

    pub fn start_dos(&mut self, drop_prob: f64, delay_ms: u64) {
        self.dos = Some((drop_prob.clamp(0.0, 1.0), delay_ms));
    }

    pub fn stop_dos(&mut self) {
        self.dos = None;
    }

    /// Records pass-through frames until `now + window_ms`.
    pub fn start_record(&mut self, now_ms: u64, window_ms: u64) {
        self.recorded.clear();
        self.recording_until_ms = Some(now_ms + window_ms);
    }

    /// Arms replay of the recorded window; live frames are suppressed
    /// until the recording is exhausted. Returns false when nothing was
    /// recorded.
    pub fn start_replay(&mut self) -> bool {
        if self.recorded.is_empty() {
            return false;
        }
        self.replay_queue = self.recorded.iter().cloned().collect();
        true
    }

    pub fn replaying(&self) -> bool {
        !self.replay_queue.is_empty()
    }

    /// Passes one polled frame through the interposer. Returns the frames
    /// due for delivery now (the current frame after transforms, plus any
    /// delayed frames that have come due); an empty vec means the frame
    /// was dropped or held.
    pub fn process(&mut self, now_ms: u64, frame: Frame) -> Vec<Frame> {
        let mut out = Vec::new();
        while let Some((due, _)) = self.delayed.front() {
            if *due > now_ms {
                break;
            }
            out.push(self.delayed.pop_front().unwrap().1);
        }

        if let Some(until) = self.recording_until_ms {
            if now_ms < until {
                self.recorded.push(frame.clone());
            } else {
                self.recording_until_ms = None;
            }
        }

        if let Some(mut replayed) = self.replay_queue.pop_front() {
            for tv in replayed.values_mut() {
                tv.timestamp_ms = now_ms;
            }
            out.push(replayed);
            return out;
        }

        if let Some((drop_prob, delay_ms)) = self.dos {
            if self.rng.gen::<f64>() < drop_prob {
                return out;
            }
            if delay_ms > 0 {
                self.delayed.push_back((now_ms + delay_ms, frame));
                return out;
            }
        }

        if !self.mitm_active {
            out.push(frame);
            return out;
        }

        let mut frame = frame;
        let mut delay = None;
        for rule in &self.rules {
            match rule.transform {
                Transform::DropProb(p) => {
                    if self.rng.gen::<f64>() < p {
                        return out;
                    }
                }
                Transform::DelayMs(ms) => delay = Some(ms),
                _ => {
                    for (tag, tv) in frame.iter_mut() {
                        if rule.matches(tag) {
                            tv.value = rule.apply_value(&tv.value);
                        }
                    }
                }
            }
        }
        match delay {
            Some(ms) if ms > 0 => self.delayed.push_back((now_ms + ms, frame)),
            _ => out.push(frame),
        }
        out
    }
}
