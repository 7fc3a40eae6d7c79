#![allow(dead_code)]

use logan_jobsvc::{JobService, ServiceConfig};
use std::path::Path;

/// `n` timestamped lines mixing routine traffic with a few failures.
pub fn dump(n: usize, seed: usize) -> String {
    let mut s = String::new();
    for i in 0..n {
        let sec = i * 3 + seed;
        let (h, m, x) = (sec / 3600 % 24, sec / 60 % 60, sec % 60);
        let body = match (i + seed) % 9 {
            0 => format!("ERROR connection refused by 10.0.{}.{}:8080", i % 7, i % 200),
            4 => format!("request {} took too long after {} ms", i, 900 + i % 300),
            _ => format!("worker {} handled request req_{} status 200", i % 4, i),
        };
        s.push_str(&format!("2024-03-01 {h:02}:{m:02}:{x:02} {body}\n"));
    }
    s
}

pub fn config(dir: &Path, pool: usize) -> ServiceConfig {
    ServiceConfig { data_dir: dir.to_owned(), pool_size: pool, ..Default::default() }
}

pub fn open(dir: &Path, pool: usize) -> JobService {
    let (svc, _) = JobService::open(config(dir, pool)).unwrap();
    svc
}
