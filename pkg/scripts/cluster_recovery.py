"""Cluster recovery on the pathological fixture over many seeds.

Only the warm-up and the clustering step run; no clustered rounds.

    python scripts/cluster_recovery.py --seeds 20
"""

import argparse

from pfedlia import fixtures
from pfedlia.clustering import adjusted_rand_index
from pfedlia.orchestrator import ExperimentResult, Simulation


def cluster(method, seed, fixture="pathological"):
    sim = Simulation(getattr(fixtures, fixture)(method), seed)
    result = ExperimentResult(seed, [], sim.shards)
    sim.clustering_phase(sim.run_warmup([]), result)
    return result


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--fixture", choices=["pathological", "noisy"], default="pathological")
    args = parser.parse_args()
    print("seed,central_ari,central_clusters,central_noise,p2p_exact_clients")
    for seed in range(args.seeds):
        c = cluster("pfedlia_central", seed, args.fixture)
        truth = [s.true_cluster for s in c.shards]
        p = cluster("pfedlia_p2p", seed, args.fixture)
        exact = sum(
            peer.beneficial == {j for j, t in enumerate(truth) if t == truth[i]}
            for i, peer in enumerate(p.peer_results)
        )
        noise = sum(v < 0 for v in c.assignment.labels)
        print(f"{seed},{adjusted_rand_index(c.assignment, truth):.4f},"
              f"{c.assignment.num_clusters},{noise},{exact}")


if __name__ == "__main__":
    main()
