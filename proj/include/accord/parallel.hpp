#pragma once

// One-dimensional ring multiply (1DMM). The sparse left operand is cut into
// P row blocks, the dense right operand into P column blocks. Worker k keeps
// its column block resident and multiplies every row block against it while
// the row blocks travel around a ring: after each local product a worker
// passes the block it holds to rank k-1 and takes the next one from k+1.
// Only the left operand ever moves.

#include <Eigen/Dense>

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "accord/error.hpp"
#include "accord/linalg.hpp"

namespace accord::parallel {

/// P contiguous ranges over [0, extent) whose sizes differ by at most one.
struct BlockPartition {
  std::vector<Index> boundaries;  // P + 1 cut points

  static BlockPartition even(Index extent, int workers) {
    if (extent < 1) throw UsageError("BlockPartition: empty extent");
    if (workers < 1) throw UsageError("BlockPartition: worker count must be >= 1");
    const Index parts = std::min<Index>(workers, extent);
    BlockPartition bp;
    bp.boundaries.resize(static_cast<std::size_t>(parts) + 1);
    const Index base = extent / parts;
    const Index extra = extent % parts;
    bp.boundaries[0] = 0;
    for (Index k = 0; k < parts; ++k) {
      bp.boundaries[static_cast<std::size_t>(k) + 1] = bp.boundaries[static_cast<std::size_t>(k)] + base + (k < extra ? 1 : 0);
    }
    return bp;
  }

  int workers() const { return static_cast<int>(boundaries.size()) - 1; }
  Index begin(int k) const { return boundaries[static_cast<std::size_t>(k)]; }
  Index end(int k) const { return boundaries[static_cast<std::size_t>(k) + 1]; }
  Index size(int k) const { return end(k) - begin(k); }
  Index extent() const { return boundaries.back(); }
};

struct CommStats {
  std::vector<int> sends;  // per worker
  std::vector<int> recvs;
  std::size_t bytes = 0;
};

/// In-process point-to-point transport with one mailbox per rank. send()
/// never blocks; recv() blocks until a message arrives or the transport is
/// aborted.
template <class Message>
class RingTransport {
 public:
  explicit RingTransport(int ranks) : boxes_(static_cast<std::size_t>(ranks)) {}

  void send(int to, Message msg) {
    auto& box = boxes_[static_cast<std::size_t>(to)];
    {
      std::lock_guard lock(box.mutex);
      box.queue.push_back(std::move(msg));
    }
    box.ready.notify_one();
  }

  std::optional<Message> recv(int at) {
    auto& box = boxes_[static_cast<std::size_t>(at)];
    std::unique_lock lock(box.mutex);
    box.ready.wait(lock, [&] { return !box.queue.empty() || aborted_.load(); });
    if (box.queue.empty()) return std::nullopt;
    Message m = std::move(box.queue.front());
    box.queue.pop_front();
    return m;
  }

  void abort() {
    aborted_.store(true);
    for (auto& box : boxes_) {
      std::lock_guard lock(box.mutex);
      box.ready.notify_all();
    }
  }

 private:
  struct Mailbox {
    std::mutex mutex;
    std::condition_variable ready;
    std::deque<Message> queue;
  };
  std::vector<Mailbox> boxes_;
  std::atomic<bool> aborted_{false};
};

template <class Block>
struct Travelling {
  int index;  // which row block this is
  Block block;
};

/// Runs the ring schedule. `own[k]` is the row block initially resident on
/// worker k; `compute(k, index, block)` is invoked once per (worker, block)
/// pair; `bytes(block)` sizes a message for the statistics. Any exception in
/// a worker aborts the whole schedule and is rethrown to the caller.
template <class Block, class Compute, class Bytes>
CommStats run_ring(std::vector<Block> own, Compute&& compute, Bytes&& bytes) {
  const int P = static_cast<int>(own.size());
  CommStats stats;
  stats.sends.assign(static_cast<std::size_t>(P), 0);
  stats.recvs.assign(static_cast<std::size_t>(P), 0);
  std::vector<std::size_t> sent_bytes(static_cast<std::size_t>(P), 0);
  RingTransport<Travelling<Block>> transport(P);
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&](int k) {
    try {
      Travelling<Block> current{k, std::move(own[static_cast<std::size_t>(k)])};
      for (int j = 0; j < P; ++j) {
        compute(k, current.index, current.block);
        if (j + 1 == P) break;
        sent_bytes[static_cast<std::size_t>(k)] += bytes(current.block);
        transport.send((k - 1 + P) % P, std::move(current));
        ++stats.sends[static_cast<std::size_t>(k)];
        auto next = transport.recv(k);
        if (!next) return;  // another worker failed
        ++stats.recvs[static_cast<std::size_t>(k)];
        current = std::move(*next);
      }
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
      transport.abort();
    }
  };

  if (P == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(P));
    for (int k = 0; k < P; ++k) threads.emplace_back(worker, k);
  }
  if (failure) std::rethrow_exception(failure);
  for (auto b : sent_bytes) stats.bytes += b;
  return stats;
}

/// Column-partitioned product: blocks[k] holds columns [begin(k), end(k)) of
/// the full result.
struct ColumnBlocks {
  BlockPartition rows;
  BlockPartition cols;
  std::vector<Eigen::MatrixXd> blocks;
  CommStats comm;

  Eigen::MatrixXd assemble() const {
    Eigen::MatrixXd out(rows.extent(), cols.extent());
    for (int k = 0; k < cols.workers(); ++k) out.middleCols(cols.begin(k), cols.size(k)) = blocks[static_cast<std::size_t>(k)];
    return out;
  }
};

/// Worker count actually used for a p-row left operand and an operand with
/// `cols` columns: blocks may not be empty on either side.
inline int effective_workers(int requested, Index p, Index cols) {
  return static_cast<int>(std::max<Index>(1, std::min<Index>({static_cast<Index>(requested), p, cols})));
}

/// omega * operand with the ring schedule over `workers` ranks.
inline ColumnBlocks ring_multiply(const SparseSquare& omega, const Eigen::Ref<const Eigen::MatrixXd>& operand,
                                  int workers) {
  if (operand.rows() != omega.dim()) {
    std::ostringstream os;
    os << "ring_multiply: omega is " << omega.dim() << " x " << omega.dim() << " but operand has " << operand.rows()
       << " rows";
    throw UsageError(os.str());
  }
  const int P = effective_workers(workers, omega.dim(), operand.cols());
  ColumnBlocks out{BlockPartition::even(omega.dim(), P), BlockPartition::even(operand.cols(), P), {}, {}};
  std::vector<SparseSquare> own;
  own.reserve(static_cast<std::size_t>(P));
  for (int k = 0; k < P; ++k) {
    own.push_back(omega.row_block(out.rows.begin(k), out.rows.end(k)));
    out.blocks.emplace_back(omega.dim(), out.cols.size(k));
  }
  out.comm = run_ring(
      std::move(own),
      [&](int k, int index, const SparseSquare& block) {
        auto resident = operand.middleCols(out.cols.begin(k), out.cols.size(k));
        auto dst = out.blocks[static_cast<std::size_t>(k)].middleRows(out.rows.begin(index), out.rows.size(index));
        spdm_into(block, resident, dst);
      },
      [](const SparseSquare& block) { return block.bytes(); });
  return out;
}

struct TwoStepResult {
  ColumnBlocks gradient;
  CommStats first;  // Y = Omega X^T
  CommStats second;  // (1/n) Y X
};

/// Gradient (1/n) (Omega X^T) X without forming S. Both products run on the
/// ring: first the sparse row blocks of Omega travel against column blocks
/// of X^T, then the dense row blocks of Y travel against column blocks of X.
inline TwoStepResult two_step_gradient(const SparseSquare& omega, const DenseData& data, int workers) {
  if (data.p() != omega.dim()) {
    std::ostringstream os;
    os << "two_step_gradient: omega is " << omega.dim() << " x " << omega.dim() << " but data has p = " << data.p();
    throw UsageError(os.str());
  }
  const Eigen::MatrixXd xt = data.values.transpose();
  ColumnBlocks y_blocks = ring_multiply(omega, xt, workers);
  const Eigen::MatrixXd y = y_blocks.assemble();

  const Index p = omega.dim();
  const int P = effective_workers(workers, p, p);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  TwoStepResult out{{BlockPartition::even(p, P), BlockPartition::even(p, P), {}, {}}, y_blocks.comm, {}};
  auto& g = out.gradient;
  std::vector<Eigen::MatrixXd> own;
  own.reserve(static_cast<std::size_t>(P));
  for (int k = 0; k < P; ++k) {
    own.emplace_back(y.middleRows(g.rows.begin(k), g.rows.size(k)));
    g.blocks.emplace_back(p, g.cols.size(k));
  }
  out.second = run_ring(
      std::move(own),
      [&](int k, int index, const Eigen::MatrixXd& block) {
        g.blocks[static_cast<std::size_t>(k)].middleRows(g.rows.begin(index), g.rows.size(index)).noalias() =
            inv_n * (block * data.values.middleCols(g.cols.begin(k), g.cols.size(k)));
      },
      [](const Eigen::MatrixXd& block) { return static_cast<std::size_t>(block.size()) * sizeof(double); });
  g.comm = out.second;
  return out;
}

}  // namespace accord::parallel
