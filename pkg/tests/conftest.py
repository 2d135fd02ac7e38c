import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stagespace.geometry import NDBox
from stagespace.server import ServerConfig, StagingServer
from stagespace.tier import parse_tier_spec


class Cluster:
    """In-process server group on ephemeral ports, for protocol tests."""

    def __init__(self, count, tier="heap:64M", global_box=NDBox((0, 0), (64, 64)),
                 block_extent=(8, 64), max_versions=10, tiers=None):
        self.servers = []
        self.addresses = []
        placeholder = [("127.0.0.1", 0)] * count
        for i in range(count):
            spec = tiers[i] if tiers else tier
            cfg = ServerConfig(server_id=i, peers=list(placeholder),
                               tier=parse_tier_spec(spec),
                               global_box=global_box,
                               block_extent=block_extent,
                               max_versions=max_versions,
                               listen=("127.0.0.1", 0))
            server = StagingServer(cfg)
            server.start()
            self.servers.append(server)
            self.addresses.append(server.address)
        for server in self.servers:
            server.config.peers = list(self.addresses)

    @property
    def grid(self):
        return self.servers[0].grid

    def shutdown(self):
        for server in self.servers:
            server.shutdown()


@pytest.fixture
def make_cluster():
    clusters = []

    def factory(count, **kwargs):
        c = Cluster(count, **kwargs)
        clusters.append(c)
        return c

    yield factory
    for c in clusters:
        c.shutdown()
