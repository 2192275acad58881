use rand::Rng;

use super::{sample_throughputs, step, ChannelSample, EnvError, NetworkChoice, ScenarioConfig, SlotOutcome, State};

/// Drives one episode: uniform initial location, then per slot a channel draw
/// followed by the transition.
///
/// The sequence of generator calls depends only on the trajectory of
/// locations, never on the chosen actions, so two policies run from the same
/// seed see the same mobility and the same throughputs.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    cfg: &'a ScenarioConfig,
    state: State,
    channel: Option<ChannelSample>,
}

impl<'a> Episode<'a> {
    pub fn start<R: Rng + ?Sized>(cfg: &'a ScenarioConfig, rng: &mut R) -> Self {
        let location = rng.random_range(0..cfg.num_locations());
        Self::start_at(cfg, location, rng)
    }

    pub fn start_at<R: Rng + ?Sized>(cfg: &'a ScenarioConfig, location: usize, rng: &mut R) -> Self {
        let state = State::initial(cfg, location);
        let channel = (!state.is_terminal(cfg)).then(|| sample_throughputs(location, cfg, rng));
        Self { cfg, state, channel }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Channel visible for the upcoming decision; `None` once terminal.
    pub fn channel(&self) -> Option<&ChannelSample> {
        self.channel.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.channel.is_none()
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, choice: NetworkChoice, rng: &mut R) -> Result<SlotOutcome, EnvError> {
        let channel = self.channel.expect("advance called on a finished episode");
        let outcome = step(&self.state, choice, &channel, self.cfg, rng)?;
        self.state = outcome.next_state.clone();
        self.channel = (!outcome.terminal).then(|| sample_throughputs(self.state.location, self.cfg, rng));
        Ok(outcome)
    }
}
