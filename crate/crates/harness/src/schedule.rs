//! Snapshot iteration schedules.

/// `0` and `{1, 2, 5} x 10^j` up to `last`, plus `last` itself.
pub fn log_schedule(last: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut decade = 1usize;
    'outer: loop {
        for f in [1, 2, 5] {
            let k = f * decade;
            if k > last {
                break 'outer;
            }
            out.push(k);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    out.push(last);
    out.dedup();
    out
}

/// `n` iterations evenly spaced over the second half `[last/2, last]`.
pub fn plateau_points(last: usize, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let start = last / 2;
    if n == 1 {
        return vec![last];
    }
    let mut out: Vec<usize> = (0..n)
        .map(|i| start + ((last - start) as f64 * i as f64 / (n - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Union of the two, sorted.
pub fn snapshot_schedule(last: usize, plateau: usize) -> Vec<usize> {
    let mut s = log_schedule(last);
    s.extend(plateau_points(last, plateau));
    s.sort_unstable();
    s.dedup();
    s
}
