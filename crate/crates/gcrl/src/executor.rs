//! Multi-threaded collection.

use std::thread;

use gcrl_core::agent::CrlAgent;
use gcrl_core::env::{EnvSlot, EnvSpec};
use gcrl_core::trainer::{collect_shard, CollectExecutor, CollectPolicy, EnvRollout};
use gcrl_core::Result;

/// Splits the environment slots into contiguous shards, one scoped thread
/// per shard, and concatenates the results in slot order. Each slot owns its
/// random stream and the actor treats rows independently, so the output is
/// the same for every worker count.
#[derive(Clone, Copy, Debug)]
pub struct Threaded {
    pub workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }
}

impl CollectExecutor for Threaded {
    fn collect(
        &self,
        agent: &CrlAgent<f32>,
        spec: &EnvSpec,
        slots: &mut [EnvSlot],
        unroll: usize,
        policy: CollectPolicy,
        action_repeat: usize,
    ) -> Result<Vec<EnvRollout>> {
        let workers = self.workers.min(slots.len()).max(1);
        if workers == 1 {
            return collect_shard(agent, spec, slots, unroll, policy, action_repeat);
        }
        let chunk = slots.len().div_ceil(workers);
        let results: Vec<Result<Vec<EnvRollout>>> = thread::scope(|s| {
            let handles: Vec<_> = slots
                .chunks_mut(chunk)
                .map(|shard| s.spawn(move || collect_shard(agent, spec, shard, unroll, policy, action_repeat)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("collection worker panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(slots.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}
