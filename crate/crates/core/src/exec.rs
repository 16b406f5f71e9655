//! Work distribution for independent items (initial conditions, sweep
//! points). Results always come back in input order, so output is the same
//! for every thread count.

/// How independent work items are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon pool; `threads: None` uses the global pool. Falls back to
    /// sequential evaluation when built without the `parallel` feature.
    #[default]
    Parallel,
    ParallelWith { threads: usize },
}

impl Exec {
    /// `Some(0)` and `None` both mean "library default".
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Exec::Sequential,
            Some(n) if n > 1 => Exec::ParallelWith { threads: n },
            _ => Exec::Parallel,
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match *self {
            Exec::Sequential => seq_map(items, f),
            Exec::Parallel => par_map(items, f),
            Exec::ParallelWith { threads } => with_pool(threads, || par_map(items, f)),
        }
    }
}

fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    seq_map(items, f)
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(threads: usize, job: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(job),
        // pool creation only fails on resource exhaustion; still give an answer
        Err(_) => job(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R>(_threads: usize, job: impl FnOnce() -> R) -> R {
    job()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_every_mode() {
        let xs: Vec<u64> = (0..257).collect();
        let want: Vec<u64> = xs.iter().map(|x| x * x + 1).collect();
        for exec in [
            Exec::Sequential,
            Exec::Parallel,
            Exec::ParallelWith { threads: 3 },
        ] {
            assert_eq!(exec.map(&xs, |_, x| x * x + 1), want);
            let idx: Vec<usize> = exec.map(&xs, |i, _| i);
            assert_eq!(idx, (0..257).collect::<Vec<_>>());
        }
    }

    #[test]
    fn thread_count_mapping() {
        assert_eq!(Exec::from_threads(None), Exec::Parallel);
        assert_eq!(Exec::from_threads(Some(0)), Exec::Parallel);
        assert_eq!(Exec::from_threads(Some(1)), Exec::Sequential);
        assert_eq!(Exec::from_threads(Some(4)), Exec::ParallelWith { threads: 4 });
    }
}
