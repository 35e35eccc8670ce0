//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library except to read parameters and build trees.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ck_core::kernel::{KernelFamily, WindowKind};
use ck_core::model::ModelParams;
use ck_core::tree::Comment;

// random trees and a brute-force window oracle

pub struct RawTree {
    pub comments: Vec<Comment>,
}

pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize, conv: &str, words: &[&str]) -> RawTree {
    let n = rng.random_range(1..=max_nodes);
    // ids are shuffled so id order and insertion order disagree
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    let ids: Vec<String> = labels.iter().map(|l| format!("n{l:03}")).collect();
    let mut comments = Vec::with_capacity(n);
    for i in 0..n {
        let parent = (i > 0).then(|| rng.random_range(0..i));
        // few distinct timestamps, so ties are common
        let ts = rng.random_range(0..(n as i64 / 2 + 2));
        let len = rng.random_range(1..=6);
        let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
        comments.push(Comment::new(
            ids[i].clone(),
            parent.map(|p| ids[p].as_str()),
            conv,
            ts,
            text.join(" "),
        ));
    }
    RawTree { comments }
}

pub struct Oracle<'a> {
    pub by_id: HashMap<&'a str, &'a Comment>,
    adj: HashMap<&'a str, Vec<&'a str>>,
}

impl<'a> Oracle<'a> {
    pub fn new(comments: &'a [Comment]) -> Self {
        let by_id: HashMap<&str, &Comment> = comments.iter().map(|c| (c.id.as_str(), c)).collect();
        let mut adj: HashMap<&str, Vec<&str>> = comments.iter().map(|c| (c.id.as_str(), Vec::new())).collect();
        for c in comments {
            if let Some(p) = c.parent_id.as_deref() {
                adj.get_mut(p).unwrap().push(c.id.as_str());
                adj.get_mut(c.id.as_str()).unwrap().push(p);
            }
        }
        Oracle { by_id, adj }
    }

    fn chrono(&self, mut ids: Vec<&'a str>) -> Vec<&'a str> {
        ids.sort_by_key(|id| (self.by_id[id].timestamp, *id));
        ids
    }

    pub fn distances(&self, from: &'a str) -> HashMap<&'a str, usize> {
        let mut dist = HashMap::from([(from, 0usize)]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for &m in &self.adj[n] {
                if !dist.contains_key(m) {
                    dist.insert(m, dist[n] + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    pub fn window(&self, kind: WindowKind, target: &'a str, l: usize) -> Vec<&'a str> {
        let parent = self.by_id[target].parent_id.as_deref();
        let mut out = match kind {
            WindowKind::Ancestor => {
                let mut chain = Vec::new();
                let mut cur = parent;
                while let Some(p) = cur {
                    chain.push(self.by_id[p].id.as_str());
                    cur = self.by_id[p].parent_id.as_deref();
                }
                chain
            }
            WindowKind::Sibling => self.chrono(
                self.by_id
                    .values()
                    .filter(|c| parent.is_some() && c.parent_id.as_deref() == parent && c.id != target)
                    .map(|c| c.id.as_str())
                    .collect(),
            ),
            WindowKind::Children => self.chrono(
                self.by_id
                    .values()
                    .filter(|c| c.parent_id.as_deref() == Some(target))
                    .map(|c| c.id.as_str())
                    .collect(),
            ),
            WindowKind::OneHop | WindowKind::TwoHop => {
                let k = if kind == WindowKind::OneHop { 1 } else { 2 };
                let d = self.distances(target);
                self.chrono(d.into_iter().filter(|(_, v)| *v == k).map(|(id, _)| id).collect())
            }
        };
        out.truncate(l);
        out
    }
}

pub const WORDS: [&str; 12] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
];

// independent forward pass on plain vectors

pub fn fnv(s: &str) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(1099511628211);
    }
    h
}

pub fn hash_vec(tokens: &[String], dim: usize) -> Vec<f64> {
    let mut feats: Vec<String> = tokens.to_vec();
    feats.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    let mut v = vec![0.0; dim];
    for f in feats {
        let h = fnv(&f);
        v[(h % dim as u64) as usize] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn words_of(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn joined_tokens(target: &str, members: &[&str]) -> Vec<String> {
    let mut t = vec!["[CLS]".to_string()];
    for text in std::iter::once(&target).chain(members) {
        t.extend(words_of(text));
        t.push("[SEP]".to_string());
    }
    t
}

pub fn mat(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn mv(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn head_p1(p: &ModelParams, input: &[f64]) -> f64 {
    let pre: Vec<f64> = mv(&mat(&p.head.w_hidden), input)
        .iter()
        .zip(p.head.b_hidden.iter())
        .map(|(a, b)| (a + b).max(0.0))
        .collect();
    let l: Vec<f64> = mv(&mat(&p.head.w_out), &pre)
        .iter()
        .zip(p.head.b_out.iter())
        .map(|(a, b)| a + b)
        .collect();
    1.0 / (1.0 + (l[0] - l[1]).exp())
}

pub struct BruteForce {
    pub p: f64,
    pub per_window: Vec<f64>,
}

pub fn brute_force(p: &ModelParams, comments: &[Comment], target: &str, family: KernelFamily, l: usize, dim: usize) -> BruteForce {
    let oracle = Oracle::new(comments);
    let text = |id: &str| oracle.by_id[id].text.clone();
    let t_text = text(target);
    let x = mv(&mat(&p.projection.w_comment), &hash_vec(&words_of(&t_text), dim));
    let mut scores = Vec::new();
    let mut qs = Vec::new();
    for &kind in family.kinds() {
        let members = oracle.window(kind, target, l);
        if members.is_empty() {
            continue;
        }
        let texts: Vec<String> = members.iter().map(|m| text(m)).collect();
        let mut mean = vec![0.0; dim];
        for t in &texts {
            for (m, v) in mean.iter_mut().zip(hash_vec(&words_of(t), dim)) {
                *m += v / texts.len() as f64;
            }
        }
        let w = mv(&mat(&p.projection.w_window), &mean);
        scores.push(x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        qs.push(head_p1(p, &hash_vec(&joined_tokens(&t_text, &refs), dim)));
    }
    if qs.is_empty() {
        let q = head_p1(p, &hash_vec(&joined_tokens(&t_text, &[]), dim));
        return BruteForce { p: q, per_window: vec![q] };
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let p1 = e.iter().zip(&qs).map(|(e, q)| e / z * q).sum();
    BruteForce { p: p1, per_window: qs }
}

pub fn randomize(params: &mut ModelParams, rng: &mut ChaCha8Rng, scale: f64) {
    for s in params.slices_mut() {
        for v in s.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}
