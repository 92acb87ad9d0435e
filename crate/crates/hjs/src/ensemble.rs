//! Parallel evaluation of independent tasks with a single ordered consumer.

use std::collections::BTreeMap;
use std::sync::mpsc;

use rayon::prelude::*;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "HJS_THREADS";

/// Worker count from `HJS_THREADS`, or the number of available cores.
pub fn threads_from_env() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            anyhow::ensure!(n >= 1, "{THREADS_ENV} must be >= 1");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `work(0..n)` on a pool of `threads` workers and feeds the results to
/// `sink` in index order on one dedicated thread.
///
/// Results depend only on the index, so the sink sees the same sequence for
/// any worker count. The first error from either side stops the run.
pub fn run_ordered<T, W, S>(n: usize, threads: usize, work: W, mut sink: S) -> anyhow::Result<()>
where
    T: Send,
    W: Fn(usize) -> anyhow::Result<T> + Sync,
    S: FnMut(usize, T) -> anyhow::Result<()> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    let (tx, rx) = mpsc::sync_channel::<(usize, T)>(4 * threads.max(1));
    std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> anyhow::Result<()> {
            let mut pending = BTreeMap::new();
            let mut next = 0;
            for (i, value) in rx {
                pending.insert(i, value);
                while let Some(v) = pending.remove(&next) {
                    sink(next, v)?;
                    next += 1;
                }
            }
            // a short stream means a worker failed; the pool reports that error
            Ok(())
        });
        let produced = pool.install(|| {
            (0..n).into_par_iter().try_for_each_with(tx, |tx, i| -> anyhow::Result<()> {
                let v = work(i)?;
                tx.send((i, v)).map_err(|_| anyhow::anyhow!("output writer stopped"))
            })
        });
        let written = writer.join().expect("writer thread panicked");
        // a writer failure closes the channel; report it rather than the send error
        written.and(produced)
    })
}

/// Collects `work(0..n)` in index order on a pool of `threads` workers.
pub fn collect_ordered<T, W>(n: usize, threads: usize, work: W) -> anyhow::Result<Vec<T>>
where
    T: Send,
    W: Fn(usize) -> anyhow::Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    pool.install(|| (0..n).into_par_iter().map(&work).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_thread_count() {
        let serial = collect_ordered(200, 1, |i| Ok(i * i)).unwrap();
        let parallel = collect_ordered(200, 8, |i| Ok(i * i)).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[13], 169);
        let mut seen = Vec::new();
        run_ordered(200, 8, |i| Ok(i * i), |i, v| {
            seen.push((i, v));
            Ok(())
        })
        .unwrap();
        assert!(seen.iter().enumerate().all(|(k, &(i, v))| k == i && v == i * i));
    }

    #[test]
    fn worker_errors_propagate() {
        let r = collect_ordered(50, 4, |i| if i == 17 { anyhow::bail!("boom") } else { Ok(i) });
        assert!(r.unwrap_err().to_string().contains("boom"));
    }

    #[test]
    fn sink_errors_propagate() {
        let r = run_ordered(50, 4, Ok, |i, _| if i == 3 { anyhow::bail!("disk full") } else { Ok(()) });
        assert!(r.unwrap_err().to_string().contains("disk full"));
    }
}
