//! Row-block data parallelism with scheduling-independent results.

/// Calls `f(first_row, rows)` over disjoint blocks of `out`, where each row
/// is `row_len` elements long. With `workers <= 1` the blocks run inline on
/// the calling thread. The output depends only on `f`, never on the worker
/// count.
pub fn for_each_row_block<T, F>(out: &mut [T], row_len: usize, workers: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    if out.is_empty() || row_len == 0 {
        return;
    }
    let rows = out.len() / row_len;
    let workers = workers.clamp(1, rows.max(1));
    if workers == 1 {
        f(0, out);
        return;
    }
    let rows_per_block = rows.div_ceil(workers);
    std::thread::scope(|scope| {
        for (i, block) in out.chunks_mut(rows_per_block * row_len).enumerate() {
            let f = &f;
            scope.spawn(move || f(i * rows_per_block, block));
        }
    });
}
