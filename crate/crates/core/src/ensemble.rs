//! Reproducible random streams and the chunked map-reduce driver.
//!
//! Sample `i` of a run with seed `s` always draws from the ChaCha8 stream
//! `(s, i)`, so its value never depends on chunking or thread count. Chunks
//! are evaluated independently and their results are combined in index
//! order.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FluctuationPath, FluctuationSampler, SdeParams};
use crate::error::{Error, Result};
use crate::geometry::{parallel_frame, FrameOptions, MetricChart};
use crate::tube::{DiscretePath, TubeSpec};

/// Stream used for the primary path draws of a sample.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Auxiliary stream for draws that must not perturb the path stream
/// (e.g. random time indices). `purpose` separates independent uses.
pub fn aux_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let key = seed ^ purpose.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Rayon pool; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { workers: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel { workers: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `Some(0)`/`Some(1)` or a build without the `parallel` feature fall back to sequential.
    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(0) | Some(1) => Execution::Sequential,
            #[cfg(feature = "parallel")]
            w => Execution::Parallel { workers: w },
            #[cfg(not(feature = "parallel"))]
            _ => Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub chunk_size: usize,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(seed: u64, n_samples: usize) -> Self {
        Self { seed, n_samples, chunk_size: 1024, execution: Execution::default() }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn chunks(&self) -> Vec<Range<usize>> {
        chunk_ranges(self.n_samples, self.chunk_size)
    }
}

pub fn chunk_ranges(n: usize, chunk_size: usize) -> Vec<Range<usize>> {
    let size = chunk_size.max(1);
    (0..n).step_by(size).map(|a| a..(a + size).min(n)).collect()
}

/// Applies `f` to every chunk of `0..n_samples`; results come back in chunk
/// order. The first failing chunk (in index order) determines the error.
pub fn map_chunks<T, F>(run: &RunConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync + Send,
{
    if run.chunk_size == 0 {
        return Err(Error::Domain("chunk_size must be positive".into()));
    }
    let chunks = run.chunks();
    let results: Vec<Result<T>> = match run.execution {
        Execution::Sequential => chunks.into_iter().map(&f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => {
            use rayon::prelude::*;
            let go = || chunks.into_par_iter().map(&f).collect::<Vec<_>>();
            match workers {
                Some(w) => rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Domain(format!("cannot build worker pool: {e}")))?
                    .install(go),
                None => go(),
            }
        }
    };
    results.into_iter().collect()
}

/// Per-sample map over `0..n_samples`, flattened in index order.
pub fn map_samples<T, F>(run: &RunConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let parts = map_chunks(run, |range| range.map(&f).collect::<Result<Vec<T>>>())?;
    Ok(parts.into_iter().flatten().collect())
}

/// One drawn fluctuation together with its assembled path.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub fluct: FluctuationPath,
    pub path: DiscretePath,
}

/// A lazily generated Monte Carlo ensemble: sample `i` is recomputed on
/// demand from `(seed, i)`, so every estimator sees the same paths.
#[derive(Debug, Clone)]
pub struct Ensemble {
    sampler: FluctuationSampler,
    run: RunConfig,
}

impl Ensemble {
    pub fn new(sampler: FluctuationSampler, run: RunConfig) -> Self {
        Self { sampler, run }
    }

    /// Builds the parallel frame along `spec.trajectory` and the sampler.
    pub fn build(chart: MetricChart, spec: TubeSpec, params: SdeParams, run: RunConfig) -> Result<Self> {
        let frame = parallel_frame(&chart, &spec.trajectory, &FrameOptions::default())?;
        Ok(Self::new(FluctuationSampler::new(chart, spec, frame, params)?, run))
    }

    pub fn sampler(&self) -> &FluctuationSampler {
        &self.sampler
    }

    pub fn run(&self) -> &RunConfig {
        &self.run
    }

    pub fn len(&self) -> usize {
        self.run.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.run.n_samples == 0
    }

    pub fn sample(&self, index: usize) -> Result<Sample> {
        let fluct = self.sampler.sample(&mut sample_rng(self.run.seed, index as u64))?;
        let path = self.sampler.assemble(&fluct)?;
        Ok(Sample { index, fluct, path })
    }

    /// `f` applied to every sample, results in index order.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Sample) -> Result<T> + Sync + Send,
    {
        map_samples(&self.run, |i| f(&self.sample(i)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_order() {
        let a: f64 = sample_rng(7, 3).random();
        let _: f64 = sample_rng(7, 2).random();
        let b: f64 = sample_rng(7, 3).random();
        assert_eq!(a, b);
        let c: f64 = sample_rng(7, 4).random();
        assert_ne!(a, c);
        let d: f64 = aux_rng(7, 3, 0).random();
        assert_ne!(a, d);
    }

    #[test]
    fn chunking_covers_range() {
        let r = chunk_ranges(10, 4);
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert!(chunk_ranges(0, 4).is_empty());
    }

    #[test]
    fn map_samples_is_order_stable() {
        let f = |i: usize| -> Result<f64> { Ok(sample_rng(1, i as u64).random::<f64>()) };
        let seq = map_samples(&RunConfig::new(1, 100).with_chunk_size(7).with_execution(Execution::Sequential), f).unwrap();
        let par = map_samples(&RunConfig::new(1, 100).with_chunk_size(3).with_execution(Execution::with_workers(Some(4))), f).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_wins() {
        let run = RunConfig::new(0, 50).with_chunk_size(5);
        let r = map_samples(&run, |i| if i >= 12 { Err(Error::Numerical(format!("{i}"))) } else { Ok(i) });
        assert_eq!(r.unwrap_err(), Error::Numerical("12".into()));
    }
}
