use std::num::NonZeroUsize;
use std::thread;

use surfgen_core::maxent::Executor;

/// Runs jobs on scoped threads, `workers` at a time, in contiguous blocks.
/// Results come back in job order, so training output does not depend on
/// the worker count.
#[derive(Clone, Copy, Debug)]
pub struct Threaded {
    workers: NonZeroUsize,
}

impl Threaded {
    pub fn new(workers: NonZeroUsize) -> Self {
        Threaded { workers }
    }

    pub fn workers(&self) -> usize {
        self.workers.get()
    }
}

impl Executor for Threaded {
    fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.workers.get().min(jobs);
        if workers <= 1 {
            return (0..jobs).map(f).collect();
        }
        let f = &f;
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let range = (w * jobs / workers)..((w + 1) * jobs / workers);
                    s.spawn(move || range.map(f).collect::<Vec<T>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    }
}
