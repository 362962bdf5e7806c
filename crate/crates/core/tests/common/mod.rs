#![allow(dead_code)]

use fractalwalk::augtree::{default_gamma, AugmentedTree, BuildOptions};
use fractalwalk::chain::{ChainSpec, ConductanceTable};
use fractalwalk::ifs::{IfsSystem, Weights};

pub fn tree(name: &str, levels: usize) -> AugmentedTree {
    let ifs = IfsSystem::builtin(name).unwrap();
    let w = Weights::natural(&ifs);
    AugmentedTree::build(&ifs, &w, &BuildOptions::new(default_gamma(&ifs), levels)).unwrap()
}

pub fn tree_with(name: &str, weights: Weights, levels: usize) -> AugmentedTree {
    let ifs = IfsSystem::builtin(name).unwrap();
    AugmentedTree::build(&ifs, &weights, &BuildOptions::new(default_gamma(&ifs), levels)).unwrap()
}

pub fn chain(tree: &AugmentedTree, lambda: f64) -> ConductanceTable {
    ConductanceTable::new(tree, &ChainSpec::new(lambda, tree.weights().clone()).unwrap()).unwrap()
}
