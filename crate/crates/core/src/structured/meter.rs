//! Per-thread FLOP meter for Monarch application.
//!
//! Counts forward block-diagonal products only, in FLOPs (one multiply-add
//! is two FLOPs). Backward passes are not charged.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn charge(flops: u64) {
    FLOPS.with(|c| c.set(c.get() + flops));
}

pub fn read() -> u64 {
    FLOPS.with(Cell::get)
}

pub fn reset() {
    FLOPS.with(|c| c.set(0));
}

/// Runs `f` and returns its result with the FLOPs it charged.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = read();
    let out = f();
    (out, read() - before)
}
