//! Thread-safe Braun heap with O(1) snapshots.
//!
//! Every node carries its own lock and a snapshot count. Operations walk the
//! tree with hand-over-hand locking, starting from the holder's reader-writer
//! lock. A snapshot is a second holder pointing at the same root with the
//! root's count bumped. A node whose count is non-zero is shared with another
//! heap and is never written; the first writer to reach it installs a private
//! copy in its own parent and moves the sharing one level down (peeling).
//!
//! Counts are conservative: a node is reachable through at most `count + 1`
//! links. Releasing a handle only decrements the root, so deeper counts may
//! stay high and cost a few extra peels later, never a shared write.

use std::cell::UnsafeCell;
use std::collections::HashMap;
use std::fmt;
use std::marker::PhantomData;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::lock_api::RawMutex as _;
use parking_lot::{RawMutex, RwLock};

use crate::error::{HandleError, StructureError};
use crate::lockorder;
use crate::persistent::{HeapNode, PHeap};
use crate::validate::{Direction, Violation, ViolationKind};

type Link<T> = Option<Arc<SnapNode<T>>>;

struct Fields<T> {
    elem: T,
    left: Link<T>,
    right: Link<T>,
}

impl<T> Fields<T> {
    fn slot_mut(&mut self, dir: Direction) -> &mut Link<T> {
        match dir {
            Direction::Left => &mut self.left,
            Direction::Right => &mut self.right,
        }
    }
}

struct SnapNode<T> {
    lock: RawMutex,
    snap_count: AtomicUsize,
    fields: UnsafeCell<Fields<T>>,
}

// Fields are only reached through a NodeGuard, which holds `lock`.
unsafe impl<T: Send> Send for SnapNode<T> {}
unsafe impl<T: Send> Sync for SnapNode<T> {}

impl<T> SnapNode<T> {
    fn new(elem: T, left: Link<T>, right: Link<T>) -> Arc<Self> {
        Arc::new(SnapNode {
            lock: RawMutex::INIT,
            snap_count: AtomicUsize::new(0),
            fields: UnsafeCell::new(Fields { elem, left, right }),
        })
    }

    fn snap_count(&self) -> usize {
        self.snap_count.load(Ordering::Acquire)
    }

    /// Drops one counted reference; a zero count means the caller held the only one.
    fn release_ref(&self) {
        let _ = self
            .snap_count
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |c| c.checked_sub(1));
    }
}

/// Owned lock on a node. Derefs to the node's fields.
struct NodeGuard<T> {
    node: Arc<SnapNode<T>>,
    depth: usize,
    _not_send: PhantomData<*const ()>,
}

impl<T> NodeGuard<T> {
    fn lock(node: Arc<SnapNode<T>>, depth: usize) -> Self {
        lockorder::node_acquire(depth);
        node.lock.lock();
        NodeGuard {
            node,
            depth,
            _not_send: PhantomData,
        }
    }

    fn node(&self) -> &Arc<SnapNode<T>> {
        &self.node
    }
}

impl<T> Deref for NodeGuard<T> {
    type Target = Fields<T>;
    fn deref(&self) -> &Fields<T> {
        unsafe { &*self.node.fields.get() }
    }
}

impl<T> DerefMut for NodeGuard<T> {
    fn deref_mut(&mut self) -> &mut Fields<T> {
        unsafe { &mut *self.node.fields.get() }
    }
}

impl<T> Drop for NodeGuard<T> {
    fn drop(&mut self) {
        unsafe { self.node.lock.unlock() };
        lockorder::node_release(self.depth);
    }
}

struct HolderState<T> {
    root: Link<T>,
    released: bool,
}

impl<T> HolderState<T> {
    fn live_root(&self) -> &Link<T> {
        assert!(!self.released, "{}", HandleError::Released);
        &self.root
    }
}

#[derive(Default, Debug)]
struct AllocCounters {
    allocated: AtomicU64,
    peeled: AtomicU64,
    snapshots: AtomicU64,
}

/// Allocation counters shared by a heap and every snapshot derived from it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocStats {
    /// Nodes created by inserts and by peeling.
    pub nodes_allocated: u64,
    /// Nodes copied because they were shared with another heap.
    pub nodes_peeled: u64,
    pub snapshots: u64,
}

impl std::ops::Sub for AllocStats {
    type Output = AllocStats;
    fn sub(self, rhs: AllocStats) -> AllocStats {
        AllocStats {
            nodes_allocated: self.nodes_allocated - rhs.nodes_allocated,
            nodes_peeled: self.nodes_peeled - rhs.nodes_peeled,
            snapshots: self.snapshots - rhs.snapshots,
        }
    }
}

enum PullStep<T> {
    Pulled(T),
    Descend(NodeGuard<T>),
}

/// A concurrent min-heap handle. Snapshots are handles of the same type.
pub struct CHeap<T> {
    holder: RwLock<HolderState<T>>,
    stats: Option<Arc<AllocCounters>>,
}

impl<T> Default for CHeap<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> fmt::Debug for CHeap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CHeap")
            .field("released", &self.is_released())
            .field("stats", &self.alloc_stats())
            .finish_non_exhaustive()
    }
}

impl<T> CHeap<T> {
    pub fn new() -> Self {
        CHeap {
            holder: RwLock::new(HolderState {
                root: None,
                released: false,
            }),
            stats: None,
        }
    }

    /// A heap that counts node allocations; snapshots share the counters.
    pub fn with_stats() -> Self {
        let mut h = Self::new();
        h.stats = Some(Arc::default());
        h
    }

    pub fn alloc_stats(&self) -> Option<AllocStats> {
        self.stats.as_ref().map(|s| AllocStats {
            nodes_allocated: s.allocated.load(Ordering::Relaxed),
            nodes_peeled: s.peeled.load(Ordering::Relaxed),
            snapshots: s.snapshots.load(Ordering::Relaxed),
        })
    }

    pub fn is_released(&self) -> bool {
        self.holder.read().released
    }

    fn read_holder(&self) -> parking_lot::RwLockReadGuard<'_, HolderState<T>> {
        lockorder::holder_acquire();
        self.holder.read()
    }

    fn write_holder(&self) -> parking_lot::RwLockWriteGuard<'_, HolderState<T>> {
        lockorder::holder_acquire();
        self.holder.write()
    }

    fn count_alloc(&self, peeled: bool) {
        if let Some(s) = &self.stats {
            s.allocated.fetch_add(1, Ordering::Relaxed);
            if peeled {
                s.peeled.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    fn leaf(&self, elem: T) -> Arc<SnapNode<T>> {
        self.count_alloc(false);
        SnapNode::new(elem, None, None)
    }

    /// Takes an O(1) snapshot: a new handle sharing this heap's root.
    ///
    /// Panics if the handle has been released.
    pub fn snapshot(&self) -> CHeap<T> {
        let holder = self.write_holder();
        let root = holder.live_root().clone();
        if let Some(r) = &root {
            let g = NodeGuard::lock(Arc::clone(r), 0);
            g.node().snap_count.fetch_add(1, Ordering::AcqRel);
        }
        drop(holder);
        if let Some(s) = &self.stats {
            s.snapshots.fetch_add(1, Ordering::Relaxed);
        }
        CHeap {
            holder: RwLock::new(HolderState {
                root,
                released: false,
            }),
            stats: self.stats.clone(),
        }
    }

    /// Gives up this handle's reference to its root. Only the root's count is
    /// decremented; the handle is unusable afterwards.
    pub fn release(&self) -> Result<(), HandleError> {
        let mut holder = self.write_holder();
        if holder.released {
            return Err(HandleError::Released);
        }
        holder.released = true;
        if let Some(r) = holder.root.take() {
            let g = NodeGuard::lock(r, 0);
            g.node().release_ref();
        }
        Ok(())
    }

    /// Folds over the contents of a private snapshot, in tree order.
    pub fn fold<A>(&self, init: A, mut f: impl FnMut(A, &T) -> A) -> A {
        let snap = self.snapshot();
        let mut acc = Some(init);
        snap.walk(|elem, _| {
            let a = acc.take().expect("accumulator present");
            acc = Some(f(a, elem));
        });
        snap.release().expect("private snapshot released once");
        acc.expect("accumulator present")
    }

    /// Point-in-time contents, unordered.
    pub fn iterate(&self) -> Vec<T>
    where
        T: Clone,
    {
        self.fold(Vec::new(), |mut v, x| {
            v.push(x.clone());
            v
        })
    }

    pub fn len(&self) -> usize {
        self.fold(0, |n, _| n + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.read_holder().live_root().is_none()
    }

    /// Sum over a linearizable point-in-time view of the heap.
    pub fn sum(&self) -> i128
    where
        T: Copy + Into<i128>,
    {
        self.fold(0i128, |s, &x| s + x.into())
    }

    // Depth-first walk holding the locks along the current path. Used on
    // private snapshots and at quiescence.
    fn walk(&self, mut f: impl FnMut(&T, usize)) {
        let holder = self.read_holder();
        let root = match holder.live_root() {
            Some(r) => Arc::clone(r),
            None => return,
        };
        let g = NodeGuard::lock(root, 0);
        drop(holder);
        fn go<T>(g: &NodeGuard<T>, f: &mut impl FnMut(&T, usize)) {
            f(&g.elem, g.depth);
            for child in [&g.left, &g.right].into_iter().flatten() {
                let cg = NodeGuard::lock(Arc::clone(child), g.depth + 1);
                go(&cg, f);
            }
        }
        go(&g, &mut f);
    }

    /// Snapshot count of the node at `path`, if there is one.
    pub fn snap_count_at(&self, path: &[Direction]) -> Option<usize> {
        let holder = self.read_holder();
        let mut g = NodeGuard::lock(Arc::clone(holder.live_root().as_ref()?), 0);
        drop(holder);
        for &dir in path {
            let child = match dir {
                Direction::Left => g.left.clone(),
                Direction::Right => g.right.clone(),
            }?;
            let next = NodeGuard::lock(child, g.depth + 1);
            g = next;
        }
        Some(g.node().snap_count())
    }

    /// Returns the identity of the node at `path`, for sharing checks.
    pub fn node_id_at(&self, path: &[Direction]) -> Option<usize> {
        let holder = self.read_holder();
        let mut g = NodeGuard::lock(Arc::clone(holder.live_root().as_ref()?), 0);
        drop(holder);
        for &dir in path {
            let child = match dir {
                Direction::Left => g.left.clone(),
                Direction::Right => g.right.clone(),
            }?;
            let next = NodeGuard::lock(child, g.depth + 1);
            g = next;
        }
        Some(Arc::as_ptr(g.node()) as usize)
    }
}

impl<T: Ord + Clone> CHeap<T> {
    /// Copy-on-write gate, run on arrival at a node the caller is about to
    /// write. An unshared node is returned as is. A shared one is copied:
    /// the copy takes a counted reference to each child and the original
    /// loses the reference this heap held. The bool reports a copy, which the
    /// caller must install into the parent slot it holds locked.
    fn peel(&self, g: NodeGuard<T>) -> (NodeGuard<T>, bool) {
        if g.node().snap_count() == 0 {
            return (g, false);
        }
        for child in [&g.left, &g.right].into_iter().flatten() {
            child.snap_count.fetch_add(1, Ordering::AcqRel);
        }
        let fresh = SnapNode::new(g.elem.clone(), g.left.clone(), g.right.clone());
        g.node().release_ref();
        self.count_alloc(true);
        let depth = g.depth;
        drop(g);
        (NodeGuard::lock(fresh, depth), true)
    }

    /// Peels `g` and then overwrites its fields.
    #[cfg(test)]
    fn update_node(
        &self,
        g: NodeGuard<T>,
        elem: T,
        left: Link<T>,
        right: Link<T>,
    ) -> (NodeGuard<T>, bool) {
        let (mut g, fresh) = self.peel(g);
        g.elem = elem;
        g.left = left;
        g.right = right;
        (g, fresh)
    }

    // Locks the child in `dir` of an already writable parent and makes it
    // writable too, installing a peeled copy if needed.
    fn descend(&self, parent: &mut NodeGuard<T>, dir: Direction) -> NodeGuard<T> {
        let child = parent
            .slot_mut(dir)
            .clone()
            .expect("descend into an existing child");
        let g = NodeGuard::lock(child, parent.depth + 1);
        let (g, fresh) = self.peel(g);
        if fresh {
            *parent.slot_mut(dir) = Some(Arc::clone(g.node()));
        }
        g
    }

    fn enter_root(&self, holder: &mut HolderState<T>, root: Arc<SnapNode<T>>) -> NodeGuard<T> {
        let g = NodeGuard::lock(root, 0);
        let (g, fresh) = self.peel(g);
        if fresh {
            holder.root = Some(Arc::clone(g.node()));
        }
        g
    }

    /// Adds `elem`. Linearizes when the holder's write lock is taken.
    pub fn insert(&self, elem: T) {
        let mut holder = self.write_holder();
        let root = match holder.live_root() {
            Some(r) => Arc::clone(r),
            None => {
                holder.root = Some(self.leaf(elem));
                return;
            }
        };
        let mut cur = self.enter_root(&mut holder, root);
        drop(holder);

        let mut carry = elem;
        loop {
            if carry < cur.elem {
                std::mem::swap(&mut carry, &mut cur.elem);
            }
            // Swap children and continue into the new left (the old right).
            let old_left = cur.left.take();
            let old_right = std::mem::replace(&mut cur.right, old_left);
            match old_right {
                None => {
                    cur.left = Some(self.leaf(carry));
                    return;
                }
                Some(next) => {
                    cur.left = Some(next);
                    let child = self.descend(&mut cur, Direction::Left);
                    cur = child;
                }
            }
        }
    }

    /// Smallest element, or `None` when empty. Takes the holder's read lock
    /// and the root's lock only.
    pub fn get_min(&self) -> Option<T> {
        let holder = self.read_holder();
        let root = Arc::clone(holder.live_root().as_ref()?);
        let g = NodeGuard::lock(root, 0);
        drop(holder);
        Some(g.elem.clone())
    }

    /// Removes and returns one occurrence of the minimum.
    ///
    /// The root stays locked from the start of the leaf extraction until the
    /// sift-down begins from it, so nobody sees the tree between the two phases.
    pub fn remove_min(&self) -> Option<T> {
        let mut holder = self.write_holder();
        let root = Arc::clone(holder.live_root().as_ref()?);
        let g = NodeGuard::lock(root, 0);
        if g.left.is_none() {
            let min = g.elem.clone();
            g.node().release_ref();
            drop(g);
            holder.root = None;
            return Some(min);
        }
        let (mut top, fresh) = self.peel(g);
        if fresh {
            holder.root = Some(Arc::clone(top.node()));
        }
        drop(holder);

        let min = top.elem.clone();
        let pulled = self.pull_up_left(&mut top);
        top.elem = pulled;
        self.push_down(top);
        Some(min)
    }

    // Removes the leftmost leaf below `top`, which stays locked throughout.
    fn pull_up_left(&self, top: &mut NodeGuard<T>) -> T {
        let mut cur = match self.pull_step(top) {
            PullStep::Pulled(v) => return v,
            PullStep::Descend(g) => g,
        };
        loop {
            let next = match self.pull_step(&mut cur) {
                PullStep::Pulled(v) => return v,
                PullStep::Descend(g) => g,
            };
            cur = next;
        }
    }

    // One level of leaf extraction at a writable non-leaf `parent`: swap its
    // children and continue into the new right (the old left). A leaf child
    // is unlinked here, by its parent.
    fn pull_step(&self, parent: &mut NodeGuard<T>) -> PullStep<T> {
        let target = parent
            .left
            .clone()
            .expect("a non-leaf Braun node has a left child");
        let tg = NodeGuard::lock(target, parent.depth + 1);
        if tg.left.is_none() {
            let v = tg.elem.clone();
            tg.node().release_ref();
            drop(tg);
            parent.left = parent.right.take();
            return PullStep::Pulled(v);
        }
        let (tg, _) = self.peel(tg);
        parent.left = parent.right.take();
        parent.right = Some(Arc::clone(tg.node()));
        PullStep::Descend(tg)
    }

    // Sifts the element at the writable node `cur` down toward the smaller
    // child. Both children are locked left then right; ties go left.
    fn push_down(&self, mut cur: NodeGuard<T>) {
        loop {
            match (cur.left.clone(), cur.right.clone()) {
                (None, None) => return,
                (Some(l), None) => {
                    let lg = NodeGuard::lock(l, cur.depth + 1);
                    if lg.elem < cur.elem {
                        let (mut lg, fresh) = self.peel(lg);
                        if fresh {
                            cur.left = Some(Arc::clone(lg.node()));
                        }
                        std::mem::swap(&mut cur.elem, &mut lg.elem);
                    }
                    return;
                }
                (Some(l), Some(r)) => {
                    let lg = NodeGuard::lock(l, cur.depth + 1);
                    let rg = NodeGuard::lock(r, cur.depth + 1);
                    if cur.elem <= lg.elem && cur.elem <= rg.elem {
                        return;
                    }
                    let (child, dir) = if lg.elem <= rg.elem {
                        drop(rg);
                        (lg, Direction::Left)
                    } else {
                        drop(lg);
                        (rg, Direction::Right)
                    };
                    let (mut cg, fresh) = self.peel(child);
                    if fresh {
                        *cur.slot_mut(dir) = Some(Arc::clone(cg.node()));
                    }
                    std::mem::swap(&mut cur.elem, &mut cg.elem);
                    cur = cg;
                }
                (None, Some(_)) => panic!("{}", StructureError::NotBraun),
            }
        }
    }

    /// Drains a private snapshot in ascending order.
    pub fn to_sorted_vec(&self) -> Vec<T> {
        let snap = self.snapshot();
        let mut out = Vec::new();
        while let Some(x) = snap.remove_min() {
            out.push(x);
        }
        snap.release().expect("private snapshot released once");
        out
    }

    /// Copies the current tree shape into a persistent heap. Meant for
    /// quiescent inspection.
    pub fn to_persistent(&self) -> PHeap<T> {
        let holder = self.read_holder();
        let root = match holder.live_root() {
            Some(r) => Arc::clone(r),
            None => return PHeap::new(),
        };
        let g = NodeGuard::lock(root, 0);
        drop(holder);
        fn go<T: Clone>(g: &NodeGuard<T>) -> HeapNode<T> {
            let sub = |c: &Link<T>| match c {
                None => HeapNode::Empty,
                Some(c) => go(&NodeGuard::lock(Arc::clone(c), g.depth + 1)),
            };
            HeapNode::branch(g.elem.clone(), sub(&g.left), sub(&g.right))
        }
        PHeap::from_root(go(&g))
    }

    /// Checks the Braun and heap properties of this handle's tree.
    pub fn validate(&self) -> Result<(), Violation> {
        sweep(&[self])
    }
}

/// Full invariant walk over a set of quiescent handles: Braun shape, heap
/// order, and that no node is reachable through more than `count + 1` links
/// (holder roots and child slots, across all the given handles).
pub fn sweep<T: Ord>(handles: &[&CHeap<T>]) -> Result<(), Violation> {
    struct Seen {
        count: usize,
        refs: usize,
        path: Vec<Direction>,
    }
    fn go<T: Ord>(
        g: &NodeGuard<T>,
        path: &mut Vec<Direction>,
        seen: &mut HashMap<*const SnapNode<T>, Seen>,
    ) -> Result<usize, Violation> {
        let mut sizes = [0usize; 2];
        for (i, (child, dir)) in [(&g.left, Direction::Left), (&g.right, Direction::Right)]
            .into_iter()
            .enumerate()
        {
            let Some(child) = child else { continue };
            let cg = NodeGuard::lock(Arc::clone(child), g.depth + 1);
            if cg.elem < g.elem {
                return Err(Violation::new(ViolationKind::HeapOrder, path.clone()).child(dir));
            }
            path.push(dir);
            let key = Arc::as_ptr(child);
            let first = !seen.contains_key(&key);
            let entry = seen.entry(key).or_insert_with(|| Seen {
                count: cg.node().snap_count(),
                refs: 0,
                path: path.clone(),
            });
            entry.refs += 1;
            sizes[i] = if first { go(&cg, path, seen)? } else { subtree_size(&cg) };
            path.pop();
        }
        let [l, r] = sizes;
        if !(r <= l && l <= r + 1) {
            return Err(Violation::new(
                ViolationKind::Braun { left: l, right: r },
                path.clone(),
            ));
        }
        Ok(1 + l + r)
    }
    fn subtree_size<T>(g: &NodeGuard<T>) -> usize {
        1 + [&g.left, &g.right]
            .into_iter()
            .flatten()
            .map(|c| subtree_size(&NodeGuard::lock(Arc::clone(c), g.depth + 1)))
            .sum::<usize>()
    }

    let mut seen: HashMap<*const SnapNode<T>, Seen> = HashMap::new();
    for h in handles {
        let holder = h.read_holder();
        if holder.released {
            continue;
        }
        let Some(root) = holder.root.clone() else { continue };
        let g = NodeGuard::lock(root, 0);
        drop(holder);
        let key = Arc::as_ptr(g.node());
        let first = !seen.contains_key(&key);
        let entry = seen.entry(key).or_insert_with(|| Seen {
            count: g.node().snap_count(),
            refs: 0,
            path: Vec::new(),
        });
        entry.refs += 1;
        if first {
            go(&g, &mut Vec::new(), &mut seen)?;
        }
    }
    let mut bad: Vec<&Seen> = seen.values().filter(|s| s.refs > s.count + 1).collect();
    bad.sort_by_key(|s| s.path.len());
    match bad.first() {
        Some(s) => Err(Violation::new(
            ViolationKind::SnapCount {
                count: s.count,
                references: s.refs,
            },
            s.path.clone(),
        )),
        None => Ok(()),
    }
}

impl<T> Drop for CHeap<T> {
    fn drop(&mut self) {
        let state = self.holder.get_mut();
        if !state.released {
            if let Some(r) = state.root.take() {
                let g = NodeGuard::lock(r, 0);
                g.node().release_ref();
            }
        }
    }
}

#[cfg(test)]
impl<T> CHeap<T> {
    // Overwrites the element at `path` without any checks.
    pub(crate) fn corrupt_elem(&self, path: &[Direction], elem: T) {
        let holder = self.read_holder();
        let mut g = NodeGuard::lock(Arc::clone(holder.root.as_ref().unwrap()), 0);
        drop(holder);
        for &dir in path {
            let child = g.slot_mut(dir).clone().unwrap();
            let next = NodeGuard::lock(child, g.depth + 1);
            g = next;
        }
        g.elem = elem;
    }

    pub(crate) fn set_snap_count(&self, path: &[Direction], count: usize) {
        let holder = self.read_holder();
        let mut g = NodeGuard::lock(Arc::clone(holder.root.as_ref().unwrap()), 0);
        drop(holder);
        for &dir in path {
            let child = g.slot_mut(dir).clone().unwrap();
            let next = NodeGuard::lock(child, g.depth + 1);
            g = next;
        }
        g.node().snap_count.store(count, Ordering::Release);
    }
}
