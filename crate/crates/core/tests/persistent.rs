use braun_heap::{HeapNode, PHeap, StructureError};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A transient heap written straight from the sequential pseudocode, with
/// `update` overwriting a node in place.
mod transient {
    #[derive(Debug, Clone)]
    pub struct Node {
        pub elem: i64,
        pub left: Option<Box<Node>>,
        pub right: Option<Box<Node>>,
    }

    impl Node {
        fn update(&mut self, elem: i64, left: Option<Box<Node>>, right: Option<Box<Node>>) {
            self.elem = elem;
            self.left = left;
            self.right = right;
        }
    }

    pub fn insert(n: Option<Box<Node>>, v: i64) -> Option<Box<Node>> {
        match n {
            None => Some(Box::new(Node {
                elem: v,
                left: None,
                right: None,
            })),
            Some(mut b) => {
                let (smaller, larger) = if v < b.elem { (v, b.elem) } else { (b.elem, v) };
                let left = b.left.take();
                let right = b.right.take();
                b.update(smaller, insert(right, larger), left);
                Some(b)
            }
        }
    }

    pub fn pull_up_left(mut b: Box<Node>, is_root: bool) -> (Option<Box<Node>>, Option<i64>) {
        match b.left.take() {
            None => (None, if is_root { None } else { Some(b.elem) }),
            Some(l) => {
                let (right_n, ret) = pull_up_left(l, false);
                let right = b.right.take();
                let elem = b.elem;
                b.update(elem, right, right_n);
                (Some(b), ret)
            }
        }
    }

    pub fn push_down(mut b: Box<Node>) -> Box<Node> {
        match (b.left.take(), b.right.take()) {
            (None, None) => b,
            (Some(mut l), None) => {
                if l.elem < b.elem {
                    let (el, ll, rl) = (l.elem, l.left.take(), l.right.take());
                    let elem = b.elem;
                    l.update(elem, ll, rl);
                    b.update(el, Some(l), None);
                } else {
                    b.left = Some(l);
                }
                b
            }
            (Some(mut l), Some(mut r)) => {
                let elem = b.elem;
                if elem <= l.elem && elem <= r.elem {
                    b.left = Some(l);
                    b.right = Some(r);
                } else if l.elem <= r.elem {
                    let (el, ll, rl) = (l.elem, l.left.take(), l.right.take());
                    l.update(elem, ll, rl);
                    b.update(el, Some(push_down(l)), Some(r));
                } else {
                    let (er, lr, rr) = (r.elem, r.left.take(), r.right.take());
                    r.update(elem, lr, rr);
                    b.update(er, Some(l), Some(push_down(r)));
                }
                b
            }
            (None, Some(_)) => panic!("This tree is not Braun"),
        }
    }

    pub fn remove_min(root: Option<Box<Node>>) -> (Option<Box<Node>>, Option<i64>) {
        match root {
            None => (None, None),
            Some(b) => {
                let min = b.elem;
                match pull_up_left(b, true) {
                    (None, None) => (None, Some(min)),
                    (Some(mut n), Some(e)) => {
                        n.elem = e;
                        (Some(push_down(n)), Some(min))
                    }
                    _ => unreachable!("pullUpLeft returns both parts or neither"),
                }
            }
        }
    }

    pub fn render(n: &Option<Box<Node>>) -> String {
        match n {
            None => ".".into(),
            Some(b) => format!("({} {} {})", b.elem, render(&b.left), render(&b.right)),
        }
    }
}

fn build(xs: &[i64]) -> PHeap<i64> {
    xs.iter().copied().collect()
}

fn transient_build(xs: &[i64]) -> Option<Box<transient::Node>> {
    xs.iter().fold(None, |t, &x| transient::insert(t, x))
}

#[test]
fn golden_shape_of_first_five_inserts() {
    let golden = "(0 (2 (4 . .) .) (1 (3 . .) .))";
    let xs = [0, 1, 2, 3, 4];
    assert_eq!(transient::render(&transient_build(&xs)), golden);
    assert_eq!(build(&xs).root().to_string(), golden);
    assert_eq!(build(&xs).get_min(), Some(0));
}

#[test]
fn golden_pull_up_left_of_five() {
    let xs = [0, 1, 2, 3, 4];
    let (t, tv) = transient::pull_up_left(transient_build(&xs).unwrap(), true);
    let (p, pv) = build(&xs).root().pull_up_left(true);
    assert_eq!(tv, Some(4));
    assert_eq!(pv, tv);
    assert_eq!(p.to_string(), transient::render(&t));
    assert_eq!(p.to_string(), "(0 (1 (3 . .) .) (2 . .))");
}

#[test]
fn golden_remove_min_of_five() {
    let xs = [0, 1, 2, 3, 4];
    let (t, tv) = transient::remove_min(transient_build(&xs));
    let (p, pv) = build(&xs).remove_min();
    assert_eq!((pv, tv), (Some(0), Some(0)));
    assert_eq!(p.root().to_string(), transient::render(&t));
    assert_eq!(p.root().to_string(), "(1 (3 (4 . .) .) (2 . .))");
}

#[test]
fn remove_min_from_zero_to_five() {
    let (h, v) = build(&[0, 1, 2, 3, 4, 5]).remove_min();
    assert_eq!(v, Some(0));
    assert_eq!(h.to_sorted_vec(), vec![1, 2, 3, 4, 5]);
}

// Every assignment of `values` to the four slots of
// Branch(_, Branch(_, Branch(_), .), Branch(_)) that is heap ordered.
fn heap_arrangements(values: [i64; 4]) -> Vec<[i64; 4]> {
    let mut out = Vec::new();
    let idx = [0usize, 1, 2, 3];
    for a in idx {
        for b in idx {
            for c in idx {
                for d in idx {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if !seen.iter().all(|&s| s) {
                        continue;
                    }
                    let v = p.map(|i| values[i]);
                    // slots: root, left, left.left, right
                    if v[0] <= v[1] && v[1] <= v[2] && v[0] <= v[3] {
                        out.push(v);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn push_down_matches_a_brute_force_arrangement() {
    let n = HeapNode::branch(
        9,
        HeapNode::branch(2, HeapNode::leaf(4), HeapNode::Empty),
        HeapNode::leaf(3),
    );
    let b = n.as_branch().unwrap();
    let out = HeapNode::push_down(b.elem, b.left.clone(), b.right.clone()).unwrap();
    let r = out.as_branch().unwrap();
    let l = r.left.as_branch().unwrap();
    let ll = l.left.as_branch().unwrap();
    let rr = r.right.as_branch().unwrap();
    assert!(l.right.is_empty() && ll.left.is_empty() && rr.left.is_empty());
    let got = [r.elem, l.elem, ll.elem, rr.elem];
    assert!(heap_arrangements([9, 2, 4, 3]).contains(&got), "{out}");
    assert_eq!(got, [2, 4, 9, 3]);
}

#[test]
fn push_down_right_only_is_not_braun() {
    let err = HeapNode::push_down(1, HeapNode::Empty, HeapNode::leaf(2)).unwrap_err();
    assert_eq!(err, StructureError::NotBraun);
}

#[test]
fn drain_of_sixty_four_random_is_sorted() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut xs: Vec<i64> = (0..64).map(|_| rand::Rng::gen_range(&mut rng, -20..20)).collect();
    let h = build(&xs);
    xs.sort_unstable();
    assert_eq!(h.to_sorted_vec(), xs);
}

#[test]
fn insertion_order_does_not_change_min() {
    let mut xs = vec![3, 1, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..12 {
        xs.shuffle(&mut rng);
        assert_eq!(build(&xs).get_min(), Some(1));
    }
}

#[derive(Debug, Clone)]
enum Step {
    Insert(i64),
    RemoveMin,
}

fn steps() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(
        prop_oneof![
            3 => (-100i64..100).prop_map(Step::Insert),
            2 => Just(Step::RemoveMin),
        ],
        0..300,
    )
}

fn ceil_log2_plus_one(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()) as usize
}

proptest! {
    #[test]
    fn valid_after_every_step_and_matches_sorted_model(ops in steps()) {
        let mut h = PHeap::new();
        let mut model: Vec<i64> = Vec::new();
        for op in ops {
            match op {
                Step::Insert(x) => {
                    h = h.insert(x);
                    model.push(x);
                }
                Step::RemoveMin => {
                    let (next, v) = h.remove_min();
                    h = next;
                    model.sort_unstable();
                    let want = if model.is_empty() { None } else { Some(model.remove(0)) };
                    prop_assert_eq!(v, want);
                }
            }
            prop_assert!(h.validate().is_ok());
            prop_assert_eq!(h.size(), model.len());
            prop_assert!(h.depth() <= ceil_log2_plus_one(h.size()));
        }
        model.sort_unstable();
        prop_assert_eq!(h.to_sorted_vec(), model);
    }

    #[test]
    fn insertion_order_independent(mut xs in prop::collection::vec(-50i64..50, 0..200), seed: u64) {
        let a = build(&xs);
        xs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = build(&xs);
        xs.sort_unstable();
        prop_assert_eq!(a.to_sorted_vec(), xs.clone());
        prop_assert_eq!(b.to_sorted_vec(), xs);
    }

    #[test]
    fn old_versions_unchanged(xs in prop::collection::vec(-50i64..50, 1..100), ops in steps()) {
        let base = build(&xs);
        let before = base.to_sorted_vec();
        let mut h = base.clone();
        for op in ops {
            h = match op {
                Step::Insert(x) => h.insert(x),
                Step::RemoveMin => h.remove_min().0,
            };
        }
        prop_assert_eq!(base.to_sorted_vec(), before);
        prop_assert!(base.validate().is_ok());
    }

    #[test]
    fn pull_up_left_removes_exactly_one(xs in prop::collection::vec(-50i64..50, 1..200)) {
        let h = build(&xs);
        let (rest, v) = h.root().pull_up_left(false);
        prop_assert_eq!(rest.size(), xs.len() - 1);
        let v = v.expect("non-root pull returns the leaf");
        let rest = PHeap::from_root(rest);
        prop_assert!(rest.validate().is_ok());
        let mut got = rest.to_sorted_vec();
        got.push(v);
        got.sort_unstable();
        let mut want = xs;
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn push_down_preserves_size_and_restores_order(
        xs in prop::collection::vec(-50i64..50, 1..200),
        top in -60i64..60,
    ) {
        let h = build(&xs);
        let b = h.root().as_branch().unwrap();
        let out = HeapNode::push_down(top, b.left.clone(), b.right.clone()).unwrap();
        prop_assert_eq!(out.size(), xs.len());
        let out = PHeap::from_root(out);
        prop_assert!(out.validate().is_ok());
        let mut want = xs;
        want.sort_unstable();
        want.remove(0);
        want.push(top);
        want.sort_unstable();
        prop_assert_eq!(out.to_sorted_vec(), want);
    }
}
