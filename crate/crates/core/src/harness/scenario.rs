//! Trial seeding and scenario generation.
//!
//! Trial `t` belongs to scene `t / channels_per_scene` and is channel draw
//! `t % channels_per_scene` of that scene. Every scene owns one ChaCha8 seed;
//! stream 0 drops the users, stream `d + 1` draws the channels of draw `d`,
//! and stream `2^32 + d` feeds the algorithms of that draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{gen_channels, ChannelSet, Geometry};
use crate::config::SystemConfig;
use crate::error::Result;

const ALGORITHM_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeed {
    pub scene_seed: u64,
    pub draw: u64,
}

impl TrialSeed {
    pub fn for_trial(master: u64, trial: usize, channels_per_scene: usize) -> Self {
        let cps = channels_per_scene.max(1);
        TrialSeed {
            scene_seed: master.wrapping_add((trial / cps) as u64),
            draw: (trial % cps) as u64,
        }
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scene_seed);
        rng.set_stream(stream);
        rng
    }

    pub fn geometry_rng(&self) -> ChaCha8Rng {
        self.stream(0)
    }

    pub fn channel_rng(&self) -> ChaCha8Rng {
        self.stream(self.draw + 1)
    }

    pub fn algorithm_rng(&self) -> ChaCha8Rng {
        self.stream(ALGORITHM_STREAM + self.draw)
    }
}

/// User drop and channel draw of one trial.
pub fn gen_scenario(cfg: &SystemConfig, seed: TrialSeed) -> Result<(Geometry, ChannelSet)> {
    let geom = Geometry::sample(cfg, &mut seed.geometry_rng());
    let channels = gen_channels(&geom, cfg, &mut seed.channel_rng())?;
    Ok((geom, channels))
}
