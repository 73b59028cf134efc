//! Execution backend for embarrassingly parallel batches.
//!
//! Results are always collected in index order, so callers see identical
//! output whichever backend ran the batch.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[cfg(any(feature = "parallel", test))]
use crate::error::Error;
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum Workers {
    Sequential,
    #[cfg(feature = "parallel")]
    Pool(Arc<rayon::ThreadPool>),
}

impl Default for Workers {
    fn default() -> Self {
        Self::with_threads(0).unwrap_or(Workers::Sequential)
    }
}

impl Workers {
    pub fn sequential() -> Self {
        Workers::Sequential
    }

    /// `0` picks the number of available cores. Without the `parallel`
    /// feature this is always sequential.
    pub fn with_threads(threads: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            if threads == 1 {
                return Ok(Workers::Sequential);
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
            Ok(Workers::Pool(Arc::new(pool)))
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Ok(Workers::Sequential)
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Workers::Sequential => 1,
            #[cfg(feature = "parallel")]
            Workers::Pool(p) => p.current_num_threads(),
        }
    }

    /// `(0..len).map(f)` collected in index order.
    pub fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Workers::Sequential => (0..len).map(f).collect(),
            #[cfg(feature = "parallel")]
            Workers::Pool(pool) => {
                use rayon::prelude::*;
                pool.install(|| (0..len).into_par_iter().map(f).collect())
            }
        }
    }

    /// Like [`Self::map`] for fallible work; the first error in index order wins.
    pub fn try_map<T, F>(&self, len: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_on_order() {
        let seq = Workers::sequential().map(100, |i| i * i);
        let par = Workers::with_threads(4).unwrap().map(100, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_in_index_order() {
        let w = Workers::with_threads(3).unwrap();
        let err = w
            .try_map(50, |i| if i % 7 == 6 { Err(Error::InvalidConfig(i.to_string())) } else { Ok(i) })
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(s) if s == "6"));
    }
}
