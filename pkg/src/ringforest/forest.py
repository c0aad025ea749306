"""Application trees over the overlay: publish/subscribe, aggregation,
a name directory, and failure recovery.

Each tree rendezvous at an application id; the live node minimizing ring
distance to that id is the tree master.  Joins walk the overlay route toward
the id and graft onto the first tree member met, so intermediate nodes become
pure forwarders and join paths converge without global state.  Master state
is replicated to proximity-near peers at every round commit so a failed
master can be replaced without losing the round.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence, Union

from .errors import (
    AlreadyExistsError,
    ConfigError,
    InvariantViolation,
    MembershipError,
    RangeError,
    UnrecoverableStateError,
)
from .idspace import AppId, NodeId, app_id, to_hex
from .overlay import Overlay, RoutePath

DIRECTORY_TREE_NAME = "tree-directory"

Value = Union[float, Sequence[float]]
Selector = Callable[[NodeId, dict], bool]


@dataclass
class TreeNodeState:
    parent: Optional[NodeId]
    children: set[NodeId] = field(default_factory=set)
    subscriber: bool = False


@dataclass
class Tree:
    app: AppId
    name: str
    master: NodeId
    selector: Optional[Selector] = None
    members: dict[NodeId, TreeNodeState] = field(default_factory=dict)
    round_no: int = 0
    state: Any = None
    # replica node -> (round committed, deep copy of the master state)
    replicas: dict[NodeId, tuple[int, Any]] = field(default_factory=dict)

    @property
    def subscribers(self) -> list[NodeId]:
        return sorted(n for n, st in self.members.items() if st.subscriber)

    def depth_of(self, node: NodeId) -> int:
        if node not in self.members:
            raise MembershipError(f"{to_hex(node)} is not in tree {self.name!r}")
        depth = 0
        cur = node
        while self.members[cur].parent is not None:
            cur = self.members[cur].parent
            depth += 1
            if depth > len(self.members):
                raise InvariantViolation("parent chain does not terminate")
        return depth


@dataclass
class JoinResult:
    accepted: bool
    reason: Optional[str] = None
    route: Optional[RoutePath] = None
    grafted_edges: list[tuple[NodeId, NodeId]] = field(default_factory=list)
    depth: Optional[int] = None


@dataclass
class BroadcastResult:
    deliveries: dict[NodeId, int]  # subscriber -> depth
    edges: list[tuple[NodeId, NodeId]]  # (parent, child) in traversal order
    max_depth: int


@dataclass
class AggregateResult:
    value: Value
    weight: float
    folds: int
    up_edges: list[tuple[NodeId, NodeId]]  # (child, parent)


@dataclass
class RepairResult:
    app: AppId
    master_changed: bool
    new_master: Optional[NodeId]
    restored_round: Optional[int]
    regrafts: list[tuple[NodeId, NodeId]]  # (orphan root, new parent)
    routes: list[RoutePath] = field(default_factory=list)
    failed_regrafts: list[tuple[NodeId, str]] = field(default_factory=list)


def _pair_add(acc: Optional[tuple], value: Value, weight: float) -> tuple:
    """Fold (value, weight) into a running (sum of w*v, sum of w) pair."""
    if isinstance(value, (int, float)):
        wv: Any = weight * float(value)
        if acc is None:
            return (wv, weight, False)
        if acc[2]:
            raise ConfigError("mixed scalar and vector contributions")
        return (acc[0] + wv, acc[1] + weight, False)
    vec = tuple(weight * float(x) for x in value)
    if acc is None:
        return (vec, weight, True)
    if not acc[2]:
        raise ConfigError("mixed scalar and vector contributions")
    if len(acc[0]) != len(vec):
        raise ConfigError("contribution length mismatch")
    return (tuple(a + b for a, b in zip(acc[0], vec)), acc[1] + weight, True)


class Forest:
    """Registry of application trees bound to one overlay."""

    def __init__(self, overlay: Overlay, replica_count: int = 2):
        if replica_count < 0:
            raise RangeError("replica count must be non-negative")
        self.overlay = overlay
        self.replica_count = replica_count
        self._trees: dict[AppId, Tree] = {}
        self._directory_app: Optional[AppId] = None

    # -- lookup -------------------------------------------------------------

    def tree(self, app: AppId) -> Tree:
        if app not in self._trees:
            raise MembershipError(f"no tree for app {to_hex(app)}")
        return self._trees[app]

    @property
    def apps(self) -> list[AppId]:
        return sorted(self._trees)

    # -- creation and membership ---------------------------------------------

    def create_tree(
        self,
        name: str,
        creator_key: bytes = b"",
        salt: bytes = b"",
        selector: Optional[Selector] = None,
        advertise: bool = True,
    ) -> Tree:
        app = app_id(name, creator_key, salt)
        if app in self._trees:
            raise AlreadyExistsError(f"tree {name!r} already exists")
        if not len(self.overlay):
            raise MembershipError("overlay has no members")
        master = self.overlay.minimizer(app)
        tree = Tree(app=app, name=name, master=master, selector=selector)
        tree.members[master] = TreeNodeState(parent=None)
        self._trees[app] = tree
        if advertise and name != DIRECTORY_TREE_NAME:
            self.advertise(name, app)
        return tree

    def subscribe(self, node: NodeId, app: AppId, attributes: Optional[dict] = None) -> JoinResult:
        """Graft a join path from node toward the tree id."""
        tree = self.tree(app)
        if node not in self.overlay:
            raise MembershipError(f"{to_hex(node)} is not a live overlay member")
        if tree.selector is not None and not tree.selector(node, attributes or {}):
            return JoinResult(accepted=False, reason="rejected by tree selector")
        if node in tree.members:
            tree.members[node].subscriber = True
            return JoinResult(accepted=True, depth=tree.depth_of(node))
        path = self.overlay.route(node, app)
        if not path.delivered:
            return JoinResult(accepted=False, reason=path.reason, route=path)
        edges = self._graft(tree, path.hops)
        tree.members[node].subscriber = True
        return JoinResult(accepted=True, route=path,
                          grafted_edges=edges, depth=tree.depth_of(node))

    def _graft(self, tree: Tree, hops: list[NodeId],
               exclude: Optional[set[NodeId]] = None) -> list[tuple[NodeId, NodeId]]:
        """Attach the chain hops[0]..first-member; the rest of the path is
        dropped.  ``exclude`` nodes never count as graft targets (a re-join
        must not graft into its own subtree)."""
        exclude = exclude or set()
        chain = [hops[0]]
        anchor: Optional[NodeId] = None
        for hop in hops[1:]:
            if hop in exclude:
                continue
            if hop in tree.members:
                anchor = hop
                break
            chain.append(hop)
        if anchor is None:
            # Route ended off-tree (membership moved since creation); fall
            # back to attaching directly under the master.
            anchor = tree.master
            chain = [hops[0]]
        edges = []
        parent = anchor
        for child in reversed(chain):
            tree.members[child] = TreeNodeState(parent=parent)
            tree.members[parent].children.add(child)
            edges.append((parent, child))
            parent = child
        return edges

    def unsubscribe(self, node: NodeId, app: AppId) -> list[NodeId]:
        """Drop a subscriber; prune any branch left with no subscribers."""
        tree = self.tree(app)
        if node not in tree.members:
            raise MembershipError(f"{to_hex(node)} is not in tree {tree.name!r}")
        tree.members[node].subscriber = False
        pruned = []
        cur = node
        while (
            cur != tree.master
            and not tree.members[cur].subscriber
            and not tree.members[cur].children
        ):
            parent = tree.members[cur].parent
            assert parent is not None
            del tree.members[cur]
            tree.members[parent].children.discard(cur)
            pruned.append(cur)
            cur = parent
        return pruned

    # -- data movement --------------------------------------------------------

    def broadcast(self, app: AppId) -> BroadcastResult:
        """Walk the tree top down; every subscriber is reached exactly once."""
        tree = self.tree(app)
        deliveries: dict[NodeId, int] = {}
        edges: list[tuple[NodeId, NodeId]] = []
        seen: set[NodeId] = set()
        frontier = [(tree.master, 0)]
        max_depth = 0
        while frontier:
            node, depth = frontier.pop(0)
            if node in seen:
                raise InvariantViolation("duplicate delivery in broadcast")
            seen.add(node)
            max_depth = max(max_depth, depth)
            if tree.members[node].subscriber:
                deliveries[node] = depth
            for child in sorted(tree.members[node].children):
                edges.append((node, child))
                frontier.append((child, depth + 1))
        return BroadcastResult(deliveries=deliveries, edges=edges, max_depth=max_depth)

    def aggregate(self, app: AppId, contributions: dict[NodeId, tuple[Value, float]]) -> AggregateResult:
        """Fold (value, weight) pairs up the tree into the weighted mean."""
        tree = self.tree(app)
        for node in contributions:
            if node not in tree.members or not tree.members[node].subscriber:
                raise MembershipError(f"{to_hex(node)} is not a subscriber")
        up_edges: list[tuple[NodeId, NodeId]] = []
        folds = 0

        def merge(a: tuple, b: tuple) -> tuple:
            nonlocal folds
            folds += 1
            if a[2] != b[2]:
                raise ConfigError("mixed scalar and vector contributions")
            if a[2]:
                if len(a[0]) != len(b[0]):
                    raise ConfigError("contribution length mismatch")
                return (tuple(x + y for x, y in zip(a[0], b[0])), a[1] + b[1], True)
            return (a[0] + b[0], a[1] + b[1], False)

        def fold(node: NodeId) -> Optional[tuple]:
            acc = None
            if node in contributions:
                value, weight = contributions[node]
                acc = _pair_add(None, value, weight)
            for child in sorted(tree.members[node].children):
                sub = fold(child)
                if sub is not None:
                    up_edges.append((child, node))
                    acc = sub if acc is None else merge(acc, sub)
            return acc

        total = fold(tree.master)
        if total is None or total[1] <= 0:
            raise RangeError("aggregate needs positive total weight")
        if total[2]:
            value: Value = tuple(x / total[1] for x in total[0])
        else:
            value = total[0] / total[1]
        return AggregateResult(value=value, weight=total[1], folds=folds, up_edges=up_edges)

    # -- round state and replication -------------------------------------------

    def snapshot_round(self, app: AppId, round_no: int, state: Any) -> list[NodeId]:
        """Commit a round at the master and copy it to near replicas."""
        tree = self.tree(app)
        if round_no < tree.round_no:
            raise RangeError(f"round {round_no} precedes committed round {tree.round_no}")
        tree.round_no = round_no
        tree.state = state
        replicas = [
            n for n in self.overlay.neighborhood_set(tree.master) if n in self.overlay
        ][: self.replica_count]
        tree.replicas = {n: (round_no, copy.deepcopy(state)) for n in replicas}
        return replicas

    # -- directory ---------------------------------------------------------------

    def _directory_tree(self) -> Tree:
        if self._directory_app is None or self._directory_app not in self._trees:
            tree = self.create_tree(DIRECTORY_TREE_NAME, advertise=False)
            tree.state = {}
            self._directory_app = tree.app
        return self._trees[self._directory_app]

    def advertise(self, name: str, app: AppId) -> NodeId:
        """Record name -> (app, master) at the directory master; returns it."""
        directory = self._directory_tree()
        if directory.state is None:
            directory.state = {}
        directory.state[name] = (app, self.tree(app).master)
        self.snapshot_round(directory.app, directory.round_no + 1, directory.state)
        return directory.master

    def discover(self, name: str) -> Optional[tuple[AppId, NodeId]]:
        directory = self._directory_tree()
        entry = (directory.state or {}).get(name)
        return tuple(entry) if entry is not None else None

    def directory(self) -> dict[str, tuple[AppId, NodeId]]:
        directory = self._directory_tree()
        return dict(directory.state or {})

    # -- recovery -------------------------------------------------------------------

    def repair_after_failure(self, failed: NodeId) -> dict[AppId, RepairResult]:
        """Mend every tree touching a failed node.

        The node must already be gone from the overlay (fail it there first);
        each orphaned child re-joins toward the tree id with its subtree
        riding along, and a dead master is replaced by the new ring minimizer
        restored from the freshest live replica."""
        if failed in self.overlay:
            raise MembershipError(f"{to_hex(failed)} is still alive; fail it in the overlay first")
        results: dict[AppId, RepairResult] = {}
        for app in sorted(self._trees):
            tree = self._trees[app]
            if failed not in tree.members:
                tree.replicas.pop(failed, None)
                continue
            results[app] = self._repair_tree(tree, failed)
        return results

    def _subtree(self, tree: Tree, root: NodeId) -> set[NodeId]:
        out = {root}
        stack = [root]
        while stack:
            for child in tree.members[stack.pop()].children:
                out.add(child)
                stack.append(child)
        return out

    def _reroot(self, tree: Tree, new_root: NodeId) -> None:
        chain = [new_root]
        while tree.members[chain[-1]].parent is not None:
            chain.append(tree.members[chain[-1]].parent)
        for child, parent in zip(chain, chain[1:]):
            tree.members[parent].children.discard(child)
            tree.members[parent].parent = child
            tree.members[child].children.add(parent)
        tree.members[new_root].parent = None

    def _repair_tree(self, tree: Tree, failed: NodeId) -> RepairResult:
        st = tree.members.pop(failed)
        if st.parent is not None and st.parent in tree.members:
            tree.members[st.parent].children.discard(failed)
        orphans = sorted(st.children)
        for orphan in orphans:
            tree.members[orphan].parent = None
        tree.replicas.pop(failed, None)

        master_changed = failed == tree.master
        restored_round: Optional[int] = None
        if master_changed:
            live_copies = [
                (rnd, state)
                for node, (rnd, state) in tree.replicas.items()
                if node in self.overlay
            ]
            if not live_copies and tree.round_no > 0:
                raise UnrecoverableStateError(
                    f"tree {tree.name!r} lost its master and every replica"
                )
            new_master = self.overlay.minimizer(tree.app)
            if new_master not in tree.members:
                tree.members[new_master] = TreeNodeState(parent=None)
            else:
                self._reroot(tree, new_master)
            tree.master = new_master
            if live_copies:
                restored_round, state = max(live_copies, key=lambda rs: rs[0])
                tree.round_no = restored_round
                tree.state = copy.deepcopy(state)
            orphans = [o for o in orphans if o != new_master]

        result = RepairResult(
            app=tree.app,
            master_changed=master_changed,
            new_master=tree.master if master_changed else None,
            restored_round=restored_round,
            regrafts=[],
        )
        for orphan in orphans:
            if orphan in self._subtree(tree, tree.master):
                continue  # already reconnected by the re-rooting above
            if orphan not in self.overlay:
                # Also failed; its own repair pass will pick up the children.
                result.failed_regrafts.append((orphan, "orphan is dead"))
                continue
            subtree = self._subtree(tree, orphan)
            path = self.overlay.route(orphan, tree.app)
            if not path.delivered:
                result.failed_regrafts.append((orphan, path.reason or "blocked"))
                continue
            anchor = None
            for hop in path.hops[1:]:
                if hop in subtree:
                    continue
                if hop in tree.members:
                    anchor = hop
                    break
            edges = self._graft_rejoin(tree, orphan, path, subtree, anchor)
            result.regrafts.append(edges[-1] if edges else (tree.master, orphan))
            result.routes.append(path)
        if master_changed:
            self._refresh_directory_after_master_change(tree)
        return result

    def _graft_rejoin(
        self,
        tree: Tree,
        orphan: NodeId,
        path: RoutePath,
        subtree: set[NodeId],
        anchor: Optional[NodeId],
    ) -> list[tuple[NodeId, NodeId]]:
        """Reattach an orphan subtree below the first member outside itself."""
        chain = [orphan]
        if anchor is not None:
            for hop in path.hops[1:]:
                if hop in subtree:
                    continue
                if hop == anchor:
                    break
                chain.append(hop)
        else:
            anchor = tree.master
        edges = []
        parent = anchor
        for member in reversed(chain[1:]):
            tree.members[member] = TreeNodeState(parent=parent)
            tree.members[parent].children.add(member)
            edges.append((parent, member))
            parent = member
        tree.members[orphan].parent = parent
        tree.members[parent].children.add(orphan)
        edges.append((parent, orphan))
        return edges

    def _refresh_directory_after_master_change(self, tree: Tree) -> None:
        directory = self._trees.get(self._directory_app) if self._directory_app else None
        if directory is None or directory.state is None:
            return
        if tree.name in directory.state:
            directory.state[tree.name] = (tree.app, tree.master)

    # -- validation and export ------------------------------------------------------

    def check_tree(self, app: AppId) -> list[str]:
        """Structural invariants; returns human-readable violations."""
        tree = self.tree(app)
        out = []
        if tree.master not in tree.members:
            out.append("master is not a member")
            return out
        if tree.members[tree.master].parent is not None:
            out.append("master has a parent")
        for node, st in tree.members.items():
            if node not in self.overlay:
                out.append(f"dead member {to_hex(node)}")
            if node != tree.master:
                if st.parent is None:
                    out.append(f"{to_hex(node)} has no parent")
                    continue
                if st.parent not in tree.members:
                    out.append(f"{to_hex(node)} parent is not a member")
                    continue
                if node not in tree.members[st.parent].children:
                    out.append(f"{to_hex(node)} missing from its parent's children")
            for child in st.children:
                if child not in tree.members:
                    out.append(f"{to_hex(node)} lists dead child {to_hex(child)}")
                elif tree.members[child].parent != node:
                    out.append(f"edge {to_hex(node)}->{to_hex(child)} not mirrored")
            if not st.children and not st.subscriber and node != tree.master:
                out.append(f"{to_hex(node)} is a childless forwarder")
        for node in tree.members:
            try:
                tree.depth_of(node)
            except InvariantViolation:
                out.append(f"{to_hex(node)} is on a parent cycle")
                break
        return out

    def edge_list(self, app: AppId) -> list[tuple[str, str]]:
        tree = self.tree(app)
        return sorted(
            (to_hex(node), to_hex(child))
            for node, st in tree.members.items()
            for child in st.children
        )
