//! Minimal differentiable layer stack for the placement agent: graph
//! convolution over the substrate, dense layers, softmax, and hand-written
//! backward passes. No autodiff; every gradient is derived analytically and
//! cross-checked against finite differences in the test suite.

mod checkpoint;

pub use checkpoint::{load_params, save_params, NeuralError};

use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};
use rand::Rng;

use crate::topology::PsnGraph;

/// Row-major 2-D tensor of finite reals.
pub type Tensor2 = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    /// tanh hidden activations, linear output (the Z values).
    Actor,
    /// ReLU hidden activations, linear scalar head.
    Critic,
}

/// Architecture description. The reference setup extracts 60 features per
/// substrate node with a 3-step propagation stack and feeds a trunk of
/// `gcn_width * nodes + nspr_feat` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub nodes: usize,
    pub node_feat: usize,
    pub nspr_feat: usize,
    pub gcn_width: usize,
    pub gcn_layers: usize,
}

impl NetShape {
    pub fn reference(nodes: usize) -> Self {
        NetShape {
            nodes,
            node_feat: 4,
            nspr_feat: 4,
            gcn_width: 60,
            gcn_layers: 3,
        }
    }

    pub fn trunk_in(&self) -> usize {
        self.gcn_width * self.nodes + self.nspr_feat
    }
}

/// Dense layer. GCN and request layers store `w` as (in, out) and apply
/// `x . w`; trunk and head layers store `w` as (out, in) and apply `w . x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor2,
    pub b: Array1<f64>,
}

impl Dense {
    fn init<R: Rng>(rows: usize, cols: usize, fan_in: usize, out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Tensor2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound));
        let b = Array1::from_shape_fn(out, |_| rng.gen_range(-bound..=bound));
        Dense { w, b }
    }

    fn zeros_like(&self) -> Self {
        Dense {
            w: Tensor2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    fn zero(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }

    fn axpy(&mut self, scale: f64, g: &Dense) {
        self.w.scaled_add(scale, &g.w);
        self.b.scaled_add(scale, &g.b);
    }
}

/// One network's parameters (either the actor or the critic; the two are
/// fully independent).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    /// Per-propagation-step GCN weights, (in, out).
    pub gcn: Vec<Dense>,
    /// Request-feature layer, (in, out), 4 units.
    pub nspr_dense: Dense,
    /// Trunk over the concatenated vector, (nodes, trunk_in).
    pub trunk: Dense,
    /// Critic-only scalar head, (1, nodes).
    pub head: Option<Dense>,
}

impl NetParams {
    pub fn init<R: Rng>(shape: &NetShape, kind: NetKind, rng: &mut R) -> Self {
        let mut gcn = Vec::with_capacity(shape.gcn_layers);
        let mut fan_in = shape.node_feat;
        for _ in 0..shape.gcn_layers {
            gcn.push(Dense::init(fan_in, shape.gcn_width, fan_in, shape.gcn_width, rng));
            fan_in = shape.gcn_width;
        }
        let nspr_dense = Dense::init(
            shape.nspr_feat,
            shape.nspr_feat,
            shape.nspr_feat,
            shape.nspr_feat,
            rng,
        );
        let trunk_in = shape.trunk_in();
        let trunk = Dense::init(shape.nodes, trunk_in, trunk_in, shape.nodes, rng);
        let head = match kind {
            NetKind::Actor => None,
            NetKind::Critic => Some(Dense::init(1, shape.nodes, shape.nodes, 1, rng)),
        };
        NetParams {
            gcn,
            nspr_dense,
            trunk,
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            gcn: self.gcn.iter().map(Dense::zeros_like).collect(),
            nspr_dense: self.nspr_dense.zeros_like(),
            trunk: self.trunk.zeros_like(),
            head: self.head.as_ref().map(Dense::zeros_like),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.gcn {
            l.zero();
        }
        self.nspr_dense.zero();
        self.trunk.zero();
        if let Some(h) = &mut self.head {
            h.zero();
        }
    }

    /// `self += scale * grads`, layer by layer.
    pub fn axpy(&mut self, scale: f64, grads: &NetParams) {
        for (l, g) in self.gcn.iter_mut().zip(&grads.gcn) {
            l.axpy(scale, g);
        }
        self.nspr_dense.axpy(scale, &grads.nspr_dense);
        self.trunk.axpy(scale, &grads.trunk);
        if let (Some(h), Some(g)) = (&mut self.head, &grads.head) {
            h.axpy(scale, g);
        }
    }

    /// Flat view of every parameter, used by the finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut push = |d: &Dense| {
            out.extend(d.w.iter());
            out.extend(d.b.iter());
        };
        for l in &self.gcn {
            push(l);
        }
        push(&self.nspr_dense);
        push(&self.trunk);
        if let Some(h) = &self.head {
            push(h);
        }
        out
    }

    /// Adds `delta` to the parameter at flat index `idx` (the `flatten`
    /// ordering). Used by the finite-difference checks.
    pub fn perturb(&mut self, idx: usize, delta: f64) {
        let mut offset = 0usize;
        let mut layers: Vec<&mut Dense> = Vec::new();
        for l in &mut self.gcn {
            layers.push(l);
        }
        layers.push(&mut self.nspr_dense);
        layers.push(&mut self.trunk);
        if let Some(h) = &mut self.head {
            layers.push(h);
        }
        for d in layers {
            let wn = d.w.len();
            if idx < offset + wn {
                let cols = d.w.ncols();
                let local = idx - offset;
                d.w[(local / cols, local % cols)] += delta;
                return;
            }
            offset += wn;
            let bn = d.b.len();
            if idx < offset + bn {
                d.b[idx - offset] += delta;
                return;
            }
            offset += bn;
        }
        panic!("parameter index {idx} out of range");
    }
}

/// Actor and critic parameter sets, trained independently.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticParams {
    pub shape: NetShape,
    pub actor: NetParams,
    pub critic: NetParams,
}

impl ActorCriticParams {
    pub fn init<R: Rng>(shape: NetShape, rng: &mut R) -> Self {
        ActorCriticParams {
            shape,
            actor: NetParams::init(&shape, NetKind::Actor, rng),
            critic: NetParams::init(&shape, NetKind::Critic, rng),
        }
    }
}

/// Symmetrically normalized adjacency with self-loops,
/// D^{-1/2} (A + I) D^{-1/2}, stored sparsely. Symmetric, so it is its own
/// transpose in the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdj {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![1.0f64; n]; // self-loop
        for &(a, b) in edges {
            degree[a] += 1.0;
            degree[b] += 1.0;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| vec![(i, 1.0 / degree[i])])
            .collect();
        for &(a, b) in edges {
            let w = 1.0 / (degree[a] * degree[b]).sqrt();
            rows[a].push((b, w));
            rows[b].push((a, w));
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        NormAdj { n, rows }
    }

    pub fn from_psn(psn: &PsnGraph) -> Self {
        let edges: Vec<(usize, usize)> = psn.links.iter().map(|l| (l.a, l.b)).collect();
        Self::from_edges(psn.node_count(), &edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// Sparse-dense product `Â . m`.
    pub fn mul(&self, m: &Tensor2) -> Tensor2 {
        assert_eq!(m.nrows(), self.n);
        let mut out = Tensor2::zeros(m.raw_dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = out.row_mut(i);
            for &(j, w) in row {
                acc.scaled_add(w, &m.row(j));
            }
        }
        out
    }
}

fn activate(kind: NetKind, x: f64) -> f64 {
    match kind {
        NetKind::Actor => x.tanh(),
        NetKind::Critic => x.max(0.0),
    }
}

/// Derivative of the hidden activation expressed through the activated
/// output (tanh' = 1 - y^2) or the pre-activation sign (ReLU).
fn activate_grad(kind: NetKind, pre: f64, out: f64) -> f64 {
    match kind {
        NetKind::Actor => 1.0 - out * out,
        NetKind::Critic => {
            if pre > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct Cache {
    pub aggs: Vec<Tensor2>,
    pub pres: Vec<Tensor2>,
    pub outs: Vec<Tensor2>,
    pub nspr_in: Array1<f64>,
    pub nspr_pre: Array1<f64>,
    pub nspr_out: Array1<f64>,
    pub concat: Array1<f64>,
    pub trunk_pre: Array1<f64>,
    pub trunk_out: Array1<f64>,
    pub value_pre: f64,
    pub value: f64,
}

impl Cache {
    /// The actor's Z values over actions (valid for `NetKind::Actor`).
    pub fn z_values(&self) -> &Array1<f64> {
        &self.trunk_out
    }
}

/// K propagation steps of `h <- act(Â . h . W + b)`. Exposed on its own so
/// the propagation rule can be exercised directly.
pub fn gcn_forward(
    adj: &NormAdj,
    x: &Tensor2,
    layers: &[Dense],
    kind: NetKind,
) -> Tensor2 {
    let mut h = x.clone();
    for layer in layers {
        let agg = adj.mul(&h);
        let mut pre = agg.dot(&layer.w);
        pre += &layer.b;
        h = pre.mapv(|v| activate(kind, v));
    }
    h
}

/// Full forward pass of one network over a single state.
///
/// Panics on a non-finite output; the training loop treats that as an
/// unrecoverable numerical failure.
pub fn forward(
    params: &NetParams,
    shape: &NetShape,
    kind: NetKind,
    adj: &NormAdj,
    node_feats: &Tensor2,
    nspr_feats: &Array1<f64>,
) -> Cache {
    assert_eq!(node_feats.nrows(), shape.nodes, "node feature shape");
    assert_eq!(node_feats.ncols(), shape.node_feat, "node feature width");
    assert_eq!(nspr_feats.len(), shape.nspr_feat, "request feature width");

    let mut aggs = Vec::with_capacity(params.gcn.len());
    let mut pres = Vec::with_capacity(params.gcn.len());
    let mut outs = Vec::with_capacity(params.gcn.len());
    let mut h = node_feats.clone();
    for layer in &params.gcn {
        let agg = adj.mul(&h);
        let mut pre = agg.dot(&layer.w);
        pre += &layer.b;
        let out = pre.mapv(|v| activate(kind, v));
        aggs.push(agg);
        pres.push(pre);
        h = out.clone();
        outs.push(out);
    }

    let nspr_pre = nspr_feats.dot(&params.nspr_dense.w) + &params.nspr_dense.b;
    let nspr_out = nspr_pre.mapv(|v| activate(kind, v));

    let mut concat = Array1::zeros(shape.trunk_in());
    let flat_len = shape.gcn_width * shape.nodes;
    concat
        .slice_mut(ndarray::s![..flat_len])
        .assign(&Array1::from_iter(h.iter().copied()));
    concat
        .slice_mut(ndarray::s![flat_len..])
        .assign(&nspr_out);

    let trunk_pre = params.trunk.w.dot(&concat) + &params.trunk.b;
    let (trunk_out, value_pre, value) = match (kind, &params.head) {
        (NetKind::Actor, _) => (trunk_pre.clone(), 0.0, 0.0),
        (NetKind::Critic, Some(head)) => {
            let out = trunk_pre.mapv(|v| activate(kind, v));
            // ReLU on the output neuron too: the value estimate never
            // goes negative.
            let pre = head.w.row(0).dot(&out) + head.b[0];
            (out, pre, pre.max(0.0))
        }
        (NetKind::Critic, None) => panic!("critic network without head"),
    };
    assert!(
        trunk_out.iter().all(|v| v.is_finite()) && value.is_finite(),
        "non-finite network output"
    );

    Cache {
        aggs,
        pres,
        outs,
        nspr_in: nspr_feats.clone(),
        nspr_pre,
        nspr_out,
        concat,
        trunk_pre,
        trunk_out,
        value_pre,
        value,
    }
}

pub fn forward_actor(
    params: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    node_feats: &Tensor2,
    nspr_feats: &Array1<f64>,
) -> Cache {
    forward(params, shape, NetKind::Actor, adj, node_feats, nspr_feats)
}

pub fn forward_critic(
    params: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    node_feats: &Tensor2,
    nspr_feats: &Array1<f64>,
) -> Cache {
    forward(params, shape, NetKind::Critic, adj, node_feats, nspr_feats)
}

/// Accumulates `dL/dparams` into `grads` for the actor, given the seed
/// `dL/dZ` at the trunk output.
pub fn backward_actor(
    params: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    cache: &Cache,
    dz: &Array1<f64>,
    grads: &mut NetParams,
) {
    backward_common(params, shape, NetKind::Actor, adj, cache, dz.clone(), grads);
}

/// Accumulates `dL/dparams` into `grads` for the critic, given the seed
/// `dL/dvalue`.
pub fn backward_critic(
    params: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    cache: &Cache,
    dvalue: f64,
    grads: &mut NetParams,
) {
    let head = params.head.as_ref().expect("critic head");
    let ghead = grads.head.as_mut().expect("critic head grads");
    // value = relu(head.w . relu(trunk_pre) + head.b)
    let dpre_out = if cache.value_pre > 0.0 { dvalue } else { 0.0 };
    for (g, h) in ghead.w.row_mut(0).iter_mut().zip(cache.trunk_out.iter()) {
        *g += dpre_out * h;
    }
    ghead.b[0] += dpre_out;
    let mut dtrunk_out = Array1::zeros(shape.nodes);
    for (d, w) in dtrunk_out.iter_mut().zip(head.w.row(0).iter()) {
        *d = dpre_out * w;
    }
    let dpre = ndarray::Zip::from(&dtrunk_out)
        .and(&cache.trunk_pre)
        .and(&cache.trunk_out)
        .map_collect(|&d, &p, &o| d * activate_grad(NetKind::Critic, p, o));
    backward_common(params, shape, NetKind::Critic, adj, cache, dpre, grads);
}

/// Shared backward path from the trunk pre-activation down through the
/// concatenation, request layer, and GCN stack.
fn backward_common(
    params: &NetParams,
    shape: &NetShape,
    kind: NetKind,
    adj: &NormAdj,
    cache: &Cache,
    dtrunk_pre: Array1<f64>,
    grads: &mut NetParams,
) {
    // trunk: pre = W . c + b, W is (out, in).
    {
        let a = dtrunk_pre.view().insert_axis(Axis(1)); // (out, 1)
        let b = cache.concat.view().insert_axis(Axis(0)); // (1, in)
        general_mat_mul(1.0, &a, &b, 1.0, &mut grads.trunk.w);
        grads.trunk.b += &dtrunk_pre;
    }
    let dconcat = params.trunk.w.t().dot(&dtrunk_pre);

    let flat_len = shape.gcn_width * shape.nodes;
    let dnspr_out = dconcat.slice(ndarray::s![flat_len..]).to_owned();
    let mut dh = Tensor2::from_shape_vec(
        (shape.nodes, shape.gcn_width),
        dconcat.slice(ndarray::s![..flat_len]).to_vec(),
    )
    .expect("flat slice matches embedding shape");

    // Request layer: pre = x . W + b, W is (in, out).
    {
        let dpre = ndarray::Zip::from(&dnspr_out)
            .and(&cache.nspr_pre)
            .and(&cache.nspr_out)
            .map_collect(|&d, &p, &o| d * activate_grad(kind, p, o));
        let a = cache.nspr_in.view().insert_axis(Axis(1)); // (in, 1)
        let b = dpre.view().insert_axis(Axis(0)); // (1, out)
        general_mat_mul(1.0, &a, &b, 1.0, &mut grads.nspr_dense.w);
        grads.nspr_dense.b += &dpre;
    }

    // GCN stack, top layer first: pre_l = (Â . h_{l-1}) . W_l + b_l.
    for l in (0..params.gcn.len()).rev() {
        let dpre = ndarray::Zip::from(&dh)
            .and(&cache.pres[l])
            .and(&cache.outs[l])
            .map_collect(|&d, &p, &o| d * activate_grad(kind, p, o));
        general_mat_mul(1.0, &cache.aggs[l].t(), &dpre.view(), 1.0, &mut grads.gcn[l].w);
        grads.gcn[l].b += &dpre.sum_axis(Axis(0));
        if l > 0 {
            // dh_{l-1} = Â^T . (dpre . W^T); Â is symmetric.
            dh = adj.mul(&dpre.dot(&params.gcn[l].w.t()));
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = z.mapv(|v| (v - max).exp());
    let sum: f64 = exps.sum();
    exps / sum
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(z: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_shape() -> NetShape {
        NetShape {
            nodes: 4,
            node_feat: 4,
            nspr_feat: 4,
            gcn_width: 5,
            gcn_layers: 2,
        }
    }

    fn random_inputs(shape: &NetShape, rng: &mut ChaCha8Rng) -> (Tensor2, Array1<f64>) {
        let x = Tensor2::from_shape_fn((shape.nodes, shape.node_feat), |_| rng.gen_range(0.0..1.0));
        let f = Array1::from_shape_fn(shape.nspr_feat, |_| rng.gen_range(0.0..1.0));
        (x, f)
    }

    #[test]
    fn isolated_node_self_loop_is_identity() {
        let adj = NormAdj::from_edges(1, &[]);
        assert_eq!(adj.entry(0, 0), 1.0);
        let x = Tensor2::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        assert_eq!(adj.mul(&x), x);
    }

    #[test]
    fn two_node_propagation_averages_neighbours() {
        // Degrees with self-loops are (2, 2), so every entry of the
        // normalized adjacency is 1/2.
        let adj = NormAdj::from_edges(2, &[(0, 1)]);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(adj.entry(i, j), 0.5);
            }
        }
        let x = Tensor2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap();
        let y = adj.mul(&x);
        assert_abs_diff_eq!(y[(0, 0)], 0.5);
        assert_abs_diff_eq!(y[(1, 0)], 0.5);
    }

    #[test]
    fn ring_graph_rows_sum_to_one() {
        // 2-regular ring: all degrees equal, so the normalized rows are
        // stochastic.
        let n = 6;
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let adj = NormAdj::from_edges(n, &edges);
        let ones = Tensor2::ones((n, 1));
        for v in adj.mul(&ones).iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_psn_embedding_width() {
        let psn = crate::topology::build_reference_psn();
        let shape = NetShape::reference(psn.node_count());
        let adj = NormAdj::from_psn(&psn);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = NetParams::init(&shape, NetKind::Actor, &mut rng);
        let x = Tensor2::zeros((shape.nodes, shape.node_feat));
        let h = gcn_forward(&adj, &x, &params.gcn, NetKind::Actor);
        assert_eq!(h.nrows(), psn.node_count());
        assert_eq!(h.ncols(), 60);
    }

    #[test]
    fn softmax_properties() {
        let z = Array1::from_vec(vec![2f64.ln(), 0.0]);
        let p = softmax(&z);
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-12);

        let z = Array1::from_vec(vec![1.0, 1.0, 1.0]);
        let p = softmax(&z);
        for v in p.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }

        // Shift invariance.
        let z = Array1::from_vec(vec![0.3, -1.2, 2.2, 0.0]);
        let shifted = &z + 7.5;
        let (p, q) = (softmax(&z), softmax(&shifted));
        for (a, b) in p.iter().zip(q.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(argmax(&p), argmax(&q));
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn critic_dead_network_returns_bias() {
        let shape = small_shape();
        let adj = NormAdj::from_edges(shape.nodes, &[(0, 1), (1, 2), (2, 3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = NetParams::init(&shape, NetKind::Critic, &mut rng);
        params.zero();
        params.head.as_mut().unwrap().b[0] = 4.25;
        let (x, f) = random_inputs(&shape, &mut rng);
        let cache = forward_critic(&params, &shape, &adj, &x, &f);
        assert_eq!(cache.value, 4.25);
        // The output neuron is rectified like every other critic neuron.
        params.head.as_mut().unwrap().b[0] = -4.25;
        let cache = forward_critic(&params, &shape, &adj, &x, &f);
        assert_eq!(cache.value, 0.0);
    }

    #[test]
    fn critic_nonnegative_under_nonnegative_weights() {
        let shape = small_shape();
        let adj = NormAdj::from_edges(shape.nodes, &[(0, 1), (2, 3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = NetParams::init(&shape, NetKind::Critic, &mut rng);
        for layer in params
            .gcn
            .iter_mut()
            .chain([&mut params.nspr_dense, &mut params.trunk])
            .chain(params.head.as_mut())
        {
            layer.w.mapv_inplace(f64::abs);
            layer.b.mapv_inplace(f64::abs);
        }
        let (x, f) = random_inputs(&shape, &mut rng);
        let cache = forward_critic(&params, &shape, &adj, &x, &f);
        assert!(cache.value >= 0.0);
    }

    /// Independent straight-line re-implementation of the forward pass
    /// with plain loops over `Vec<Vec<f64>>`.
    fn naive_forward(
        params: &NetParams,
        shape: &NetShape,
        kind: NetKind,
        adj: &NormAdj,
        x: &Tensor2,
        f: &Array1<f64>,
    ) -> (Vec<f64>, f64) {
        let act = |v: f64| match kind {
            NetKind::Actor => v.tanh(),
            NetKind::Critic => v.max(0.0),
        };
        let n = shape.nodes;
        let mut h: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..shape.node_feat).map(|j| x[(i, j)]).collect())
            .collect();
        for layer in &params.gcn {
            let width = h[0].len();
            let mut agg = vec![vec![0.0; width]; n];
            for i in 0..n {
                for j in 0..n {
                    let w = adj.entry(i, j);
                    if w != 0.0 {
                        for k in 0..width {
                            agg[i][k] += w * h[j][k];
                        }
                    }
                }
            }
            let mut next = vec![vec![0.0; shape.gcn_width]; n];
            for i in 0..n {
                for o in 0..shape.gcn_width {
                    let mut s = layer.b[o];
                    for k in 0..width {
                        s += agg[i][k] * layer.w[(k, o)];
                    }
                    next[i][o] = act(s);
                }
            }
            h = next;
        }
        let mut u = vec![0.0; shape.nspr_feat];
        for o in 0..shape.nspr_feat {
            let mut s = params.nspr_dense.b[o];
            for k in 0..shape.nspr_feat {
                s += f[k] * params.nspr_dense.w[(k, o)];
            }
            u[o] = act(s);
        }
        let mut c: Vec<f64> = h.iter().flatten().copied().collect();
        c.extend(u);
        let mut z = vec![0.0; n];
        for o in 0..n {
            let mut s = params.trunk.b[o];
            for (k, cv) in c.iter().enumerate() {
                s += params.trunk.w[(o, k)] * cv;
            }
            z[o] = s;
        }
        match (kind, &params.head) {
            (NetKind::Actor, _) => (z, 0.0),
            (NetKind::Critic, Some(head)) => {
                let hidden: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
                let mut v = head.b[0];
                for (k, hv) in hidden.iter().enumerate() {
                    v += head.w[(0, k)] * hv;
                }
                (hidden, v.max(0.0))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn forward_matches_independent_evaluator() {
        let shape = small_shape();
        let adj = NormAdj::from_edges(shape.nodes, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, f) = random_inputs(&shape, &mut rng);
            for kind in [NetKind::Actor, NetKind::Critic] {
                let params = NetParams::init(&shape, kind, &mut rng);
                let cache = forward(&params, &shape, kind, &adj, &x, &f);
                let (z, v) = naive_forward(&params, &shape, kind, &adj, &x, &f);
                for (a, b) in cache.trunk_out.iter().zip(z.iter()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                }
                if kind == NetKind::Critic {
                    assert_abs_diff_eq!(cache.value, v, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn non_finite_output_panics() {
        let shape = small_shape();
        let adj = NormAdj::from_edges(shape.nodes, &[(0, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = NetParams::init(&shape, NetKind::Actor, &mut rng);
        params.trunk.b[0] = f64::NAN;
        let (x, f) = random_inputs(&shape, &mut rng);
        forward_actor(&params, &shape, &adj, &x, &f);
    }

    #[test]
    fn softmax_positive_and_normalized_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let z = Array1::from_shape_fn(7, |_| rng.gen_range(-30.0..30.0));
            let p = softmax(&z);
            assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-9);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    /// Gradient of a scalar loss through the full network against central
    /// finite differences. The loss here is a fixed linear functional of
    /// the outputs, which exercises every layer's backward rule.
    #[test]
    fn backward_matches_finite_differences() {
        let shape = small_shape();
        let adj = NormAdj::from_edges(shape.nodes, &[(0, 1), (1, 2), (2, 3)]);
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (x, f) = random_inputs(&shape, &mut rng);
            // Actor: L = sum_i w_i Z_i.
            let params = NetParams::init(&shape, NetKind::Actor, &mut rng);
            let wl = Array1::from_shape_fn(shape.nodes, |_| rng.gen_range(-1.0..1.0));
            let cache = forward_actor(&params, &shape, &adj, &x, &f);
            let mut grads = params.zeros_like();
            backward_actor(&params, &shape, &adj, &cache, &wl, &mut grads);
            let loss = |p: &NetParams| {
                let c = forward_actor(p, &shape, &adj, &x, &f);
                c.trunk_out.dot(&wl)
            };
            check_grads(&params, &grads, loss);

            // Critic: L = value.
            let params = NetParams::init(&shape, NetKind::Critic, &mut rng);
            let cache = forward_critic(&params, &shape, &adj, &x, &f);
            let mut grads = params.zeros_like();
            backward_critic(&params, &shape, &adj, &cache, 1.0, &mut grads);
            let loss = |p: &NetParams| forward_critic(p, &shape, &adj, &x, &f).value;
            check_grads(&params, &grads, loss);
        }
    }

    fn check_grads<F: Fn(&NetParams) -> f64>(params: &NetParams, grads: &NetParams, loss: F) {
        let flat = grads.flatten();
        let h = 1e-5;
        for idx in 0..flat.len() {
            let mut plus = params.clone();
            plus.perturb(idx, h);
            let mut minus = params.clone();
            minus.perturb(idx, -h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = fd.abs().max(flat[idx].abs()).max(1e-6);
            assert!(
                ((fd - flat[idx]) / denom).abs() <= 1e-4,
                "grad mismatch at {idx}: analytic {} vs fd {}",
                flat[idx],
                fd
            );
        }
    }
}
