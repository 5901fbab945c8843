//! Debug-build lock ordering checks.
//!
//! Node locks must be taken root-to-leaf, and the holder lock before any node
//! lock. A node never changes depth, so a per-thread stack of held depths is
//! enough to catch an out-of-order acquisition. Release builds compile this away.

#[cfg(debug_assertions)]
mod imp {
    use std::cell::RefCell;

    thread_local! {
        static HELD: RefCell<Vec<usize>> = const { RefCell::new(Vec::new()) };
    }

    pub fn holder_acquire() {
        HELD.with(|h| {
            let h = h.borrow();
            assert!(
                h.is_empty(),
                "lock order violated: holder lock requested while holding node locks at depths {:?}",
                *h
            );
        });
    }

    pub fn node_acquire(depth: usize) {
        HELD.with(|h| {
            let mut h = h.borrow_mut();
            if let Some(&deepest) = h.iter().max() {
                assert!(
                    deepest <= depth,
                    "lock order violated: node lock at depth {depth} requested while holding depth {deepest}"
                );
            }
            h.push(depth);
        });
    }

    pub fn node_release(depth: usize) {
        HELD.with(|h| {
            let mut h = h.borrow_mut();
            if let Some(i) = h.iter().rposition(|&d| d == depth) {
                h.swap_remove(i);
            }
        });
    }
}

#[cfg(not(debug_assertions))]
mod imp {
    #[inline(always)]
    pub fn holder_acquire() {}
    #[inline(always)]
    pub fn node_acquire(_depth: usize) {}
    #[inline(always)]
    pub fn node_release(_depth: usize) {}
}

pub(crate) use imp::*;
