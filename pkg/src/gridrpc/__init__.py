"""Stateless XML-RPC grid services stack.

Server side: HTTP dispatch over registered ``module.method`` handlers with
signed-request authentication, hierarchical ACLs, virtual-organization
management, credential escrow, rooted file access, and sandboxed job
execution. Client side: a signing session with a block-caching remote file
reader and the ``grid-cli`` tool.
"""

from gridrpc.wire import RpcFault, RpcRequest

__version__ = "0.1.0"

__all__ = ["RpcFault", "RpcRequest", "__version__"]
