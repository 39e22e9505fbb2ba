//! Dinic's max-flow over f64 capacities. Deterministic: arc order is
//! construction order, searches are index-ordered.

const EPS: f64 = 1e-12;

#[derive(Clone)]
struct Arc {
    to: u32,
    cap: f64,
}

pub struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<u32>>,
}

impl FlowGraph {
    pub fn new(num_nodes: usize) -> FlowGraph {
        FlowGraph { arcs: Vec::new(), adj: vec![Vec::new(); num_nodes] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        debug_assert!(cap >= 0.0);
        let id = self.arcs.len() as u32;
        self.arcs.push(Arc { to: to as u32, cap });
        self.arcs.push(Arc { to: from as u32, cap: 0.0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.adj.len();
        let mut total = 0.0;
        let mut level = vec![-1i32; n];
        let mut ptr = vec![0usize; n];
        loop {
            // BFS level graph on the residual
            for l in level.iter_mut() {
                *l = -1;
            }
            level[s] = 0;
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &aid in &self.adj[u] {
                    let a = &self.arcs[aid as usize];
                    if a.cap > EPS && level[a.to as usize] < 0 {
                        level[a.to as usize] = level[u] + 1;
                        queue.push_back(a.to as usize);
                    }
                }
            }
            if level[t] < 0 {
                break;
            }
            for p in ptr.iter_mut() {
                *p = 0;
            }
            loop {
                let pushed = self.dfs(s, t, f64::INFINITY, &level, &mut ptr);
                if pushed <= EPS {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    fn dfs(&mut self, u: usize, t: usize, limit: f64, level: &[i32], ptr: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while ptr[u] < self.adj[u].len() {
            let aid = self.adj[u][ptr[u]] as usize;
            let (to, cap) = {
                let a = &self.arcs[aid];
                (a.to as usize, a.cap)
            };
            if cap > EPS && level[to] == level[u] + 1 {
                let pushed = self.dfs(to, t, limit.min(cap), level, ptr);
                if pushed > EPS {
                    self.arcs[aid].cap -= pushed;
                    self.arcs[aid ^ 1].cap += pushed;
                    return pushed;
                }
            }
            ptr[u] += 1;
        }
        0.0
    }

    /// Nodes reachable from `s` in the residual graph (the minimal source
    /// side of a minimum cut once flow is maximal).
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &aid in &self.adj[u] {
                let a = &self.arcs[aid as usize];
                if a.cap > EPS && !seen[a.to as usize] {
                    seen[a.to as usize] = true;
                    queue.push_back(a.to as usize);
                }
            }
        }
        seen
    }
}
