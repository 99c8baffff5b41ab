//! Chaotic-iteration fixpoint over all reachable call-graph nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use super::turtle::{cap_path, extend};
use super::*;
use crate::frontend::ast::ParamKind;
use crate::frontend::ir::{
    CallKind, CallOrNew, InstrKind, IrProcedure, MethodKind, ProcKind, VarRef,
};

pub(super) struct Solver<'p> {
    program: &'p IrProgram,
    config: AnalysisConfig,
    entry: ModuleId,
    atoms: Vec<Atom>,
    atom_ids: HashMap<Atom, AtomId>,
    locs: HashMap<Loc, usize>,
    sets: Vec<BTreeSet<AtomId>>,
    nodes: Vec<CgNode>,
    node_ids: HashMap<CgNode, NodeId>,
    edges: BTreeMap<(NodeId, Option<SiteId>), BTreeSet<NodeId>>,
    behaviors: BTreeMap<(NodeId, SiteId), BTreeSet<Behavior>>,
    producers: BTreeSet<Producer>,
    pending: BTreeSet<PendingTurtleRead>,
    turtle_reads: BTreeSet<(ProcId, String)>,
    /// Field names written or read per object atom.
    fields_of: HashMap<AtomId, BTreeSet<Arc<str>>>,
    /// Names bound in each class body.
    class_names: HashMap<ProcId, BTreeSet<String>>,
    /// Instruction id of each parameter's `Param` instruction.
    param_instrs: HashMap<ProcId, Vec<InstrId>>,
    uncallable: BTreeSet<(NodeId, SiteId, AtomId)>,
    unresolved_enclosing: BTreeSet<(NodeId, InstrId)>,
    changed: bool,
    deadline: Option<Instant>,
}

impl<'p> Solver<'p> {
    pub(super) fn new(program: &'p IrProgram, entry: ModuleId, config: &AnalysisConfig) -> Result<Self, AnalysisError> {
        if entry as usize >= program.modules.len() {
            return Err(AnalysisError::UnknownEntry(entry));
        }
        let mut class_names = HashMap::new();
        let mut param_instrs = HashMap::new();
        for p in program.procs() {
            if p.kind == ProcKind::ClassBody {
                let mut names = BTreeSet::new();
                for i in p.instrs() {
                    if let InstrKind::StoreVar { var: VarRef::ClassAttr { name, .. }, .. } = &i.kind {
                        names.insert(name.clone());
                    }
                }
                class_names.insert(p.id, names);
            }
            let mut params = vec![InstrId(0); p.params.len()];
            for i in p.instrs() {
                if let InstrKind::Param { index, .. } = i.kind {
                    params[index as usize] = i.id;
                }
            }
            param_instrs.insert(p.id, params);
        }
        Ok(Solver {
            program,
            config: config.clone(),
            entry,
            atoms: Vec::new(),
            atom_ids: HashMap::new(),
            locs: HashMap::new(),
            sets: Vec::new(),
            nodes: Vec::new(),
            node_ids: HashMap::new(),
            edges: BTreeMap::new(),
            behaviors: BTreeMap::new(),
            producers: BTreeSet::new(),
            pending: BTreeSet::new(),
            turtle_reads: BTreeSet::new(),
            fields_of: HashMap::new(),
            class_names,
            param_instrs,
            uncallable: BTreeSet::new(),
            unresolved_enclosing: BTreeSet::new(),
            changed: false,
            deadline: config.time_budget.map(|d| Instant::now() + d),
        })
    }

    pub(super) fn run(mut self) -> Result<AnalysisResult, AnalysisError> {
        let root = self.node(CgNode { proc: CgProc::Root, context: ContextKey::Default, env: None });
        debug_assert_eq!(root, ROOT);
        let script = self.program.module(self.entry).script();
        let main = self.node(CgNode { proc: CgProc::User(script), context: ContextKey::Default, env: None });
        self.edge(root, None, main);
        self.intern(Atom::Obj(AnalysisType::ScriptInstance(self.entry)));

        let mut restarts = 0;
        let mut history = Vec::new();
        loop {
            self.propagate()?;
            history.push(self.nodes.len());
            // Convert reads on turtle-derived classes whose field was never
            // assigned into turtle reads, then propagate again.
            let mut fresh = BTreeSet::new();
            let pending: Vec<PendingTurtleRead> = self.pending.iter().cloned().collect();
            for p in &pending {
                let key = (p.class, p.field.clone());
                if self.turtle_reads.contains(&key) || fresh.contains(&key) {
                    continue;
                }
                if self.lookup_is_empty(p.class, &p.field) {
                    fresh.insert(key);
                }
            }
            if fresh.is_empty() {
                break;
            }
            if restarts >= self.config.max_restarts {
                return Err(self.budget(format!("restart cap of {} reached", self.config.max_restarts)));
            }
            restarts += 1;
            self.turtle_reads.extend(fresh);
        }

        Ok(AnalysisResult {
            entry: self.entry,
            atoms: self.atoms,
            atom_ids: self.atom_ids,
            locs: self.locs,
            sets: self.sets,
            nodes: self.nodes,
            edges: self.edges,
            behaviors: self.behaviors,
            producers: self.producers,
            pending: self.pending,
            turtle_reads: self.turtle_reads,
            restarts,
            restart_history: history,
            diagnostics: Diagnostics {
                uncallable: self.uncallable.len(),
                unresolved_enclosing: self.unresolved_enclosing.len(),
            },
        })
    }

    fn budget(&self, reason: String) -> AnalysisError {
        AnalysisError::Budget { file: self.program.module(self.entry).path.clone(), reason }
    }

    fn propagate(&mut self) -> Result<(), AnalysisError> {
        loop {
            self.changed = false;
            let mut i = 0;
            while i < self.nodes.len() {
                if let Some(d) = self.deadline {
                    if Instant::now() > d {
                        return Err(self.budget("time budget exceeded".into()));
                    }
                }
                let node = i as NodeId;
                if let CgProc::User(p) = self.nodes[i].proc {
                    let proc = self.program.proc(p);
                    for block in &proc.blocks {
                        for ins in &block.instrs {
                            self.apply(node, proc, ins.id, &ins.kind);
                        }
                    }
                }
                i += 1;
            }
            if !self.changed {
                return Ok(());
            }
        }
    }

    // ---- storage ----

    fn intern(&mut self, atom: Atom) -> AtomId {
        if let Some(&id) = self.atom_ids.get(&atom) {
            return id;
        }
        let id = self.atoms.len() as AtomId;
        self.atoms.push(atom.clone());
        self.atom_ids.insert(atom, id);
        id
    }

    fn obj(&mut self, t: AnalysisType) -> AtomId {
        self.intern(Atom::Obj(t))
    }

    fn loc(&mut self, loc: Loc) -> usize {
        if let Some(&i) = self.locs.get(&loc) {
            return i;
        }
        if let Loc::Field(o, name) = &loc {
            self.fields_of.entry(*o).or_default().insert(name.clone());
        }
        let i = self.sets.len();
        self.sets.push(BTreeSet::new());
        self.locs.insert(loc, i);
        i
    }

    fn get(&self, loc: &Loc) -> Vec<AtomId> {
        match self.locs.get(loc) {
            Some(&i) => self.sets[i].iter().copied().collect(),
            None => Vec::new(),
        }
    }

    fn add(&mut self, loc: Loc, atom: AtomId) {
        let i = self.loc(loc);
        if self.sets[i].insert(atom) {
            self.changed = true;
        }
    }

    fn add_all(&mut self, loc: Loc, atoms: &[AtomId]) {
        if atoms.is_empty() {
            return;
        }
        let i = self.loc(loc);
        for a in atoms {
            if self.sets[i].insert(*a) {
                self.changed = true;
            }
        }
    }

    fn flow(&mut self, from: Loc, to: Loc) {
        let atoms = self.get(&from);
        self.add_all(to, &atoms);
    }

    fn node(&mut self, n: CgNode) -> NodeId {
        if let Some(&id) = self.node_ids.get(&n) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(n.clone());
        self.node_ids.insert(n, id);
        self.changed = true;
        id
    }

    fn edge(&mut self, from: NodeId, site: Option<SiteId>, to: NodeId) {
        if self.edges.entry((from, site)).or_default().insert(to) {
            self.changed = true;
        }
    }

    fn behavior(&mut self, from: NodeId, site: SiteId, b: Behavior) {
        if self.behaviors.entry((from, site)).or_default().insert(b) {
            self.changed = true;
        }
    }

    fn producer(&mut self, node: NodeId, instr: InstrId, kind: ProducerKind) -> AtomId {
        let p = Producer { node, instr, kind };
        if self.producers.insert(p) {
            self.changed = true;
        }
        self.intern(Atom::Prod(p))
    }

    fn turtle(&mut self, path: &str) -> AtomId {
        let p = cap_path(path, self.config.max_turtle_depth);
        self.obj(AnalysisType::Turtle(p))
    }

    fn context_for(&self, site: SiteId) -> ContextKey {
        if self.config.user_site_context {
            ContextKey::Site(site)
        } else {
            ContextKey::Default
        }
    }

    // ---- classes ----

    /// Class linearization: the class, then its user bases depth-first.
    fn mro(&self, class: ProcId) -> Vec<ProcId> {
        let mut out = Vec::new();
        let mut stack = vec![class];
        while let Some(c) = stack.pop() {
            if out.contains(&c) {
                continue;
            }
            out.push(c);
            let bases: Vec<ProcId> = self
                .get(&Loc::Bases(c))
                .iter()
                .filter_map(|a| match &self.atoms[*a as usize] {
                    Atom::Obj(AnalysisType::ClassObject(b)) => Some(*b),
                    _ => None,
                })
                .collect();
            for b in bases.into_iter().rev() {
                stack.push(b);
            }
        }
        out
    }

    /// Turtle paths among the (transitive) bases of a class.
    fn turtle_bases(&self, class: ProcId) -> Vec<Arc<str>> {
        let mut out: Vec<Arc<str>> = Vec::new();
        for c in self.mro(class) {
            for a in self.get(&Loc::Bases(c)) {
                if let Atom::Obj(AnalysisType::Turtle(p)) = &self.atoms[a as usize] {
                    if !out.contains(p) {
                        out.push(p.clone());
                    }
                }
            }
        }
        out
    }

    /// Class attribute lookup along the linearization. Stops at the first
    /// class that binds the name in its body.
    fn class_attr(&mut self, class: ProcId, field: &str) -> Vec<AtomId> {
        let mut out = Vec::new();
        for c in self.mro(class) {
            let co = self.obj(AnalysisType::ClassObject(c));
            out.extend(self.get(&Loc::Field(co, Arc::from(field))));
            if self.class_names.get(&c).map(|n| n.contains(field)).unwrap_or(false) {
                break;
            }
        }
        out
    }

    /// Bind function values found as class attributes to a receiver.
    fn bind(&mut self, atoms: &[AtomId], class: ProcId, via_instance: bool) -> Vec<AtomId> {
        let mut out = Vec::new();
        for &a in atoms {
            let bound = match &self.atoms[a as usize] {
                Atom::Obj(AnalysisType::FunctionInstance { proc, env }) => {
                    let (proc, env) = (*proc, *env);
                    match self.program.proc(proc).method_kind {
                        MethodKind::Static => None,
                        MethodKind::Class => Some(AnalysisType::BoundMethod {
                            proc,
                            env,
                            receiver: Box::new(AnalysisType::ClassObject(class)),
                        }),
                        MethodKind::Plain if via_instance => Some(AnalysisType::BoundMethod {
                            proc,
                            env,
                            receiver: Box::new(AnalysisType::InstanceOf(class)),
                        }),
                        MethodKind::Plain => None,
                    }
                }
                _ => None,
            };
            out.push(match bound {
                Some(t) => self.obj(t),
                None => a,
            });
        }
        out
    }

    /// Atoms a read of `field` on an instance (or the class object) yields.
    fn member(&mut self, class: ProcId, field: &str, via_instance: bool) -> Vec<AtomId> {
        let mut out = Vec::new();
        if via_instance {
            let io = self.obj(AnalysisType::InstanceOf(class));
            out.extend(self.get(&Loc::Field(io, Arc::from(field))));
        }
        let attrs = self.class_attr(class, field);
        out.extend(self.bind(&attrs, class, via_instance));
        out
    }

    fn lookup_is_empty(&mut self, class: ProcId, field: &str) -> bool {
        self.member(class, field, true).is_empty() && self.member(class, field, false).is_empty()
    }

    // ---- instructions ----

    fn apply(&mut self, n: NodeId, proc: &IrProcedure, id: InstrId, kind: &InstrKind) {
        let module = proc.id.module;
        let reg = |r: Reg| Loc::Reg(n, r);
        match kind {
            InstrKind::Const { result, value, as_receiver } => {
                if *as_receiver {
                    let t = self.turtle(value.type_name());
                    let p = self.producer(n, id, ProducerKind::Const);
                    self.add(reg(*result), t);
                    self.add(reg(*result), p);
                }
            }
            InstrKind::Param { result, index } => {
                self.flow(Loc::Param(n, *index), reg(*result));
                if proc.params.get(*index as usize).map(|p| p.has_default).unwrap_or(false) {
                    self.flow(Loc::Defaults(proc.id, *index), reg(*result));
                }
            }
            InstrKind::LoadVar { result, var } => match var {
                VarRef::Unbound(name) => {
                    let t = self.turtle(name);
                    self.add(reg(*result), t);
                }
                _ => {
                    if let Some(l) = self.var_loc(n, id, module, var) {
                        self.flow(l, reg(*result));
                    }
                }
            },
            InstrKind::StoreVar { var, value } => {
                if let Some(l) = self.var_loc(n, id, module, var) {
                    self.flow(reg(*value), l);
                }
            }
            InstrKind::Phi { result, sources } => {
                for s in sources {
                    self.flow(reg(*s), reg(*result));
                }
            }
            InstrKind::Build { result, items } => {
                for s in items {
                    self.flow(reg(*s), reg(*result));
                }
            }
            InstrKind::BinOp { result, operands, .. } => {
                let p = self.producer(n, id, ProducerKind::LocalExpr);
                self.add(reg(*result), p);
                for o in operands {
                    let turtles: Vec<AtomId> = self
                        .get(&reg(*o))
                        .into_iter()
                        .filter(|a| matches!(self.atoms[*a as usize], Atom::Obj(AnalysisType::Turtle(_))))
                        .collect();
                    self.add_all(reg(*result), &turtles);
                }
            }
            InstrKind::Return { value } => self.flow(reg(*value), Loc::Ret(n)),
            InstrKind::MakeFunction { result, proc: f, defaults } => {
                let t = self.obj(AnalysisType::FunctionInstance { proc: *f, env: Some(n) });
                self.add(reg(*result), t);
                for (i, r) in defaults {
                    self.flow(reg(*r), Loc::Defaults(*f, *i));
                }
            }
            InstrKind::MakeClass { result, class, bases, site } => self.make_class(n, *result, *class, bases, *site),
            InstrKind::Import { result, dotted, site } => self.import(n, *result, dotted, *site),
            InstrKind::FieldRead { result, object, field, method_callee, .. } => {
                self.field_read(n, id, *result, *object, field, *method_callee)
            }
            InstrKind::FieldWrite { object, field, value } => {
                let field: Arc<str> = Arc::from(field.as_str());
                for a in self.get(&reg(*object)) {
                    match self.atoms[a as usize].clone() {
                        Atom::Obj(AnalysisType::Turtle(_)) => {}
                        Atom::Obj(AnalysisType::ModuleInstance(m)) | Atom::Obj(AnalysisType::ScriptInstance(m)) => {
                            self.flow(reg(*value), Loc::Global(m, field.clone()))
                        }
                        Atom::Obj(_) => self.flow(reg(*value), Loc::Field(a, field.clone())),
                        _ => {}
                    }
                }
            }
            InstrKind::Call(c) => self.call(n, id, c),
            InstrKind::Unsupported { .. } => {}
        }
    }

    fn var_loc(&mut self, n: NodeId, id: InstrId, module: ModuleId, var: &VarRef) -> Option<Loc> {
        Some(match var {
            VarRef::Local(name) => Loc::Var(n, Arc::from(name.as_str())),
            VarRef::Global(name) => Loc::Global(module, Arc::from(name.as_str())),
            VarRef::ClassAttr { class, name } => {
                let co = self.obj(AnalysisType::ClassObject(*class));
                Loc::Field(co, Arc::from(name.as_str()))
            }
            VarRef::Enclosing { depth, name } => {
                let mut cur = n;
                for _ in 0..*depth {
                    match self.nodes[cur as usize].env {
                        Some(e) => cur = e,
                        None => {
                            self.unresolved_enclosing.insert((n, id));
                            return None;
                        }
                    }
                }
                Loc::Var(cur, Arc::from(name.as_str()))
            }
            VarRef::Unbound(_) => return None,
        })
    }

    fn import(&mut self, n: NodeId, result: Reg, dotted: &str, site: SiteId) {
        let imp = self.intern(Atom::Imp(site));
        self.add(Loc::Reg(n, result), imp);
        if let Some(m) = self.program.module_by_name(dotted) {
            let t = self.obj(AnalysisType::ModuleInstance(m));
            self.add(Loc::Reg(n, result), t);
            self.run_module(n, site, m);
            return;
        }
        if let Some((head, member)) = dotted.rsplit_once('.') {
            if let Some(m) = self.program.module_by_name(head) {
                self.run_module(n, site, m);
                self.flow(Loc::Global(m, Arc::from(member)), Loc::Reg(n, result));
                return;
            }
        }
        let t = self.turtle(dotted);
        self.add(Loc::Reg(n, result), t);
    }

    fn run_module(&mut self, n: NodeId, site: SiteId, m: ModuleId) {
        let script = self.program.module(m).script();
        let target = self.node(CgNode { proc: CgProc::User(script), context: ContextKey::Default, env: None });
        self.edge(n, Some(site), target);
    }

    fn make_class(&mut self, n: NodeId, result: Reg, class: ProcId, bases: &[Reg], site: SiteId) {
        let co = self.obj(AnalysisType::ClassObject(class));
        self.add(Loc::Reg(n, result), co);
        for b in bases {
            let objs: Vec<AtomId> = self
                .get(&Loc::Reg(n, *b))
                .into_iter()
                .filter(|a| matches!(self.atoms[*a as usize], Atom::Obj(_)))
                .collect();
            self.add_all(Loc::Bases(class), &objs);
        }
        let ctx = self.context_for(site);
        let body = self.node(CgNode { proc: CgProc::User(class), context: ctx, env: Some(n) });
        self.edge(n, Some(site), body);

        // Methods of classes extending library classes are entry points the
        // library may call.
        let turtle_bases = self.turtle_bases(class);
        if turtle_bases.is_empty() {
            return;
        }
        let names: Vec<Arc<str>> = self.fields_of.get(&co).map(|s| s.iter().cloned().collect()).unwrap_or_default();
        for name in names {
            for a in self.get(&Loc::Field(co, name.clone())) {
                let Atom::Obj(AnalysisType::FunctionInstance { proc, env }) = self.atoms[a as usize].clone() else {
                    continue;
                };
                let callee = self.program.proc(proc);
                if callee.parent != Some(class) {
                    continue;
                }
                let target = self.node(CgNode { proc: CgProc::User(proc), context: ctx, env });
                self.edge(n, Some(site), target);
                let params = self.param_instrs.get(&proc).cloned().unwrap_or_default();
                for (i, pid) in params.iter().enumerate() {
                    let receiver = match (callee.method_kind, i) {
                        (MethodKind::Plain, 0) => Some(AnalysisType::InstanceOf(class)),
                        (MethodKind::Class, 0) => Some(AnalysisType::ClassObject(class)),
                        _ => None,
                    };
                    match receiver {
                        Some(r) => {
                            let r = self.obj(r);
                            self.add(Loc::Param(target, i as u32), r);
                        }
                        None => {
                            for base in &turtle_bases {
                                let t = self.turtle(base);
                                self.add(Loc::Param(target, i as u32), t);
                            }
                            let p = self.producer(target, *pid, ProducerKind::Param);
                            self.add(Loc::Param(target, i as u32), p);
                        }
                    }
                }
            }
        }
    }

    fn field_read(&mut self, n: NodeId, id: InstrId, result: Reg, object: Reg, field: &str, callee: bool) {
        let out = Loc::Reg(n, result);
        if !callee {
            let p = self.producer(n, id, ProducerKind::FieldRead);
            self.add(out.clone(), p);
        }
        let fname: Arc<str> = Arc::from(field);
        let mut found: Vec<AtomId> = Vec::new();
        for a in self.get(&Loc::Reg(n, object)) {
            match self.atoms[a as usize].clone() {
                Atom::Obj(AnalysisType::Turtle(_)) => found.push(a),
                Atom::Obj(AnalysisType::InstanceOf(c)) => {
                    let vals = self.member(c, field, true);
                    self.turtle_member(n, id, c, field, callee, vals.is_empty(), &mut found);
                    found.extend(vals);
                }
                Atom::Obj(AnalysisType::ClassObject(c)) => {
                    let vals = self.member(c, field, false);
                    self.turtle_member(n, id, c, field, callee, vals.is_empty(), &mut found);
                    found.extend(vals);
                }
                Atom::Obj(AnalysisType::ModuleInstance(m)) | Atom::Obj(AnalysisType::ScriptInstance(m)) => {
                    found.extend(self.get(&Loc::Global(m, fname.clone())));
                }
                Atom::Obj(_) => found.extend(self.get(&Loc::Field(a, fname.clone()))),
                _ => {}
            }
        }
        if callee {
            self.add_all(out, &found);
        } else {
            let (prods, rest): (Vec<AtomId>, Vec<AtomId>) =
                found.into_iter().partition(|a| matches!(self.atoms[*a as usize], Atom::Prod(_)));
            self.add_all(out, &rest);
            self.add_all(Loc::Input(n, id), &prods);
        }
    }

    /// Reads of never-assigned members on classes extending turtles.
    #[allow(clippy::too_many_arguments)]
    fn turtle_member(
        &mut self,
        n: NodeId,
        id: InstrId,
        class: ProcId,
        field: &str,
        callee: bool,
        empty: bool,
        found: &mut Vec<AtomId>,
    ) {
        let bases = self.turtle_bases(class);
        if bases.is_empty() {
            return;
        }
        if self.turtle_reads.contains(&(class, field.to_string())) {
            for b in bases {
                // A method read returns the container; the call extends the
                // path with the member name.
                let path = if callee { b.to_string() } else { format!("{b}.{field}") };
                found.push(self.turtle(&path));
            }
        } else if empty {
            let p = PendingTurtleRead { node: n, instr: id, class, field: field.to_string(), callee };
            if self.pending.insert(p) {
                self.changed = true;
            }
        }
    }

    // ---- calls ----

    fn call(&mut self, n: NodeId, id: InstrId, c: &CallOrNew) {
        let result = Loc::Reg(n, c.result);
        match c.kind {
            CallKind::NoOp => {
                self.behavior(n, c.site, Behavior::Builtin { name: c.site_name.clone() });
                return;
            }
            CallKind::Identity => {
                self.behavior(n, c.site, Behavior::Builtin { name: c.site_name.clone() });
                let first = c.args.first().or(c.star_args.first()).or(c.keywords.first().map(|(_, r)| r));
                if let Some(r) = first {
                    self.flow(Loc::Reg(n, *r), result);
                }
                return;
            }
            CallKind::Normal => {}
        }
        let mut user = false;
        for a in self.get(&Loc::Reg(n, c.callee)) {
            let Atom::Obj(t) = self.atoms[a as usize].clone() else { continue };
            match t {
                AnalysisType::Turtle(path) => self.turtle_call(n, id, c, &path),
                AnalysisType::ClassObject(class) => {
                    user = true;
                    self.create(n, c, class);
                }
                AnalysisType::InstanceOf(class) => {
                    let calls = self.member(class, "__call__", true);
                    let mut any = false;
                    for f in calls {
                        any |= self.invoke_value(n, c, f);
                    }
                    user |= any;
                    if !any {
                        self.uncallable.insert((n, c.site, a));
                    }
                }
                AnalysisType::ModuleInstance(m) | AnalysisType::ScriptInstance(m) => {
                    let mut any = false;
                    for f in self.get(&Loc::Global(m, Arc::from("__call__"))) {
                        if let Atom::Obj(AnalysisType::FunctionInstance { proc, env }) = self.atoms[f as usize].clone() {
                            self.invoke(n, c, proc, env, None, ArgBinding::Call);
                            self.behavior(n, c.site, Behavior::ModuleCall { module: m, proc });
                            any = true;
                        }
                    }
                    user |= any;
                    if !any {
                        self.uncallable.insert((n, c.site, a));
                    }
                }
                AnalysisType::FunctionInstance { proc, env } => {
                    user = true;
                    self.invoke(n, c, proc, env, None, ArgBinding::Call);
                    self.behavior(n, c.site, Behavior::Call { proc });
                }
                AnalysisType::BoundMethod { proc, env, receiver } => {
                    user = true;
                    let r = self.obj(*receiver);
                    self.invoke(n, c, proc, env, Some(r), ArgBinding::Call);
                    self.behavior(n, c.site, Behavior::BoundCall { proc });
                }
            }
        }
        if user {
            let p = self.producer(n, id, ProducerKind::CallResult);
            self.add(result, p);
        }
    }

    /// Call a value found through a member lookup (e.g. `__call__`).
    fn invoke_value(&mut self, n: NodeId, c: &CallOrNew, f: AtomId) -> bool {
        match self.atoms[f as usize].clone() {
            Atom::Obj(AnalysisType::FunctionInstance { proc, env }) => {
                self.invoke(n, c, proc, env, None, ArgBinding::Call);
                self.behavior(n, c.site, Behavior::Call { proc });
                true
            }
            Atom::Obj(AnalysisType::BoundMethod { proc, env, receiver }) => {
                let r = self.obj(*receiver);
                self.invoke(n, c, proc, env, Some(r), ArgBinding::Call);
                self.behavior(n, c.site, Behavior::BoundCall { proc });
                true
            }
            _ => false,
        }
    }

    fn create(&mut self, n: NodeId, c: &CallOrNew, class: ProcId) {
        let news = self.class_attr(class, "__new__");
        let mut overridden = false;
        for f in news {
            if let Atom::Obj(AnalysisType::FunctionInstance { proc, env }) = self.atoms[f as usize].clone() {
                overridden = true;
                let cls = self.obj(AnalysisType::ClassObject(class));
                self.invoke(n, c, proc, env, Some(cls), ArgBinding::Call);
                self.behavior(n, c.site, Behavior::NewOverride { class, new: proc });
            }
        }
        let defines_new = self
            .mro(class)
            .iter()
            .any(|c| self.class_names.get(c).map(|n| n.contains("__new__")).unwrap_or(false));
        if overridden || defines_new {
            return;
        }
        let inst = self.obj(AnalysisType::InstanceOf(class));
        self.add(Loc::Reg(n, c.result), inst);
        self.behavior(n, c.site, Behavior::Create { class });
        let inits = self.member(class, "__init__", true);
        for f in inits {
            if let Atom::Obj(AnalysisType::BoundMethod { proc, env, .. }) = self.atoms[f as usize].clone() {
                self.invoke(n, c, proc, env, Some(inst), ArgBinding::Init);
            }
        }
    }

    fn turtle_call(&mut self, n: NodeId, id: InstrId, c: &CallOrNew, path: &str) {
        let new_path = if c.attr_call { extend(path, &c.site_name, self.config.max_turtle_depth) } else { Arc::from(path) };
        let t = self.obj(AnalysisType::Turtle(new_path.clone()));
        let p = self.producer(n, id, ProducerKind::TurtleResult);
        let result = Loc::Reg(n, c.result);
        self.add(result.clone(), t);
        self.add(result, p);
        let tn = self.node(CgNode { proc: CgProc::Turtle, context: ContextKey::Site(c.site), env: None });
        self.edge(n, Some(c.site), tn);
        self.behavior(n, c.site, Behavior::Turtle { path: new_path.to_string() });

        // Functions passed to the library may be called back by it.
        let arg_regs: Vec<Reg> = c
            .args
            .iter()
            .chain(c.star_args.iter())
            .copied()
            .chain(c.keywords.iter().map(|(_, r)| *r))
            .collect();
        for r in arg_regs {
            for a in self.get(&Loc::Reg(n, r)) {
                let (proc, env, receiver) = match self.atoms[a as usize].clone() {
                    Atom::Obj(AnalysisType::FunctionInstance { proc, env }) => (proc, env, None),
                    Atom::Obj(AnalysisType::BoundMethod { proc, env, receiver }) => {
                        let r = self.obj(*receiver);
                        (proc, env, Some(r))
                    }
                    _ => continue,
                };
                self.invoke(n, c, proc, env, receiver, ArgBinding::Callback(vec![t, p]));
                self.behavior(n, c.site, Behavior::Callback { proc });
            }
        }
    }

    /// Create (or find) the callee node, add the edge and bind arguments.
    fn invoke(
        &mut self,
        n: NodeId,
        c: &CallOrNew,
        proc: ProcId,
        env: Option<NodeId>,
        receiver: Option<AtomId>,
        binding: ArgBinding,
    ) {
        let ctx = self.context_for(c.site);
        let target = self.node(CgNode { proc: CgProc::User(proc), context: ctx, env });
        self.edge(n, Some(c.site), target);
        let callee = self.program.proc(proc);
        let nparams = callee.params.len();
        let mut first = 0;
        if let Some(r) = receiver {
            if nparams > 0 {
                self.add(Loc::Param(target, 0), r);
                // Values that flowed into the receiver expression also flow
                // into `self`.
                if let (ArgBinding::Call, Some(rr)) = (&binding, c.receiver) {
                    let prods: Vec<AtomId> = self
                        .get(&Loc::Reg(n, rr))
                        .into_iter()
                        .filter(|a| matches!(self.atoms[*a as usize], Atom::Prod(_)))
                        .collect();
                    self.add_all(Loc::Param(target, 0), &prods);
                }
            }
            first = 1;
        }
        if let ArgBinding::Callback(atoms) = &binding {
            for i in first..nparams {
                self.add_all(Loc::Param(target, i as u32), atoms);
            }
        } else {
            self.bind_args(n, c, callee, target, first);
        }
        if !matches!(binding, ArgBinding::Init) {
            self.flow(Loc::Ret(target), Loc::Reg(n, c.result));
        }
    }

    fn bind_args(&mut self, n: NodeId, c: &CallOrNew, callee: &IrProcedure, target: NodeId, first: usize) {
        let params = &callee.params;
        let positional: Vec<usize> =
            (first..params.len()).filter(|&i| params[i].kind == ParamKind::Positional).collect();
        let varargs = params.iter().position(|p| p.kind == ParamKind::VarArgs);
        let varkw = params.iter().position(|p| p.kind == ParamKind::VarKeywords);
        for (k, r) in c.args.iter().enumerate() {
            let slot = positional.get(k).copied().or(varargs);
            if let Some(i) = slot {
                self.flow(Loc::Reg(n, *r), Loc::Param(target, i as u32));
            }
        }
        for r in &c.star_args {
            for &i in positional.iter().skip(c.args.len()).chain(varargs.iter()) {
                self.flow(Loc::Reg(n, *r), Loc::Param(target, i as u32));
            }
        }
        for (name, r) in &c.keywords {
            match name {
                Some(name) => {
                    let slot = (first..params.len())
                        .find(|&i| {
                            params[i].name == *name
                                && matches!(params[i].kind, ParamKind::Positional | ParamKind::KeywordOnly)
                        })
                        .or(varkw);
                    if let Some(i) = slot {
                        self.flow(Loc::Reg(n, *r), Loc::Param(target, i as u32));
                    }
                }
                None => {
                    for i in first..params.len() {
                        if params[i].kind != ParamKind::VarArgs {
                            self.flow(Loc::Reg(n, *r), Loc::Param(target, i as u32));
                        }
                    }
                }
            }
        }
    }
}

enum ArgBinding {
    Call,
    /// Constructor call: arguments bound, return value ignored.
    Init,
    /// Library callback: every parameter receives these atoms.
    Callback(Vec<AtomId>),
}
