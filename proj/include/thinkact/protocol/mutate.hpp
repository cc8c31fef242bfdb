#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thinkact/protocol/types.hpp"

namespace thinkact::protocol {

// Item-level editable rendering of a trajectory. Each inject() call plants
// one violation of the requested kind; several may be stacked. Injections
// never delete or blank a piece an earlier injection planted, so a stack
// keeps every violation it was given.
class DocumentEditor {
 public:
  explicit DocumentEditor(const Trajectory& trajectory);

  // False when this document shape cannot host the kind.
  bool inject(ViolationKind kind, std::uint64_t seed);

  std::string text() const;

 private:
  struct Piece {
    std::optional<TagName> tag;  // nullopt for raw inserted markup
    std::string open;
    std::string body;
    std::string close;
    bool planted = false;  // created or edited by an injection
  };

  std::vector<std::size_t> indices_of(TagName tag) const;

  std::vector<Piece> pieces_;
};

// Renders a violation-free trajectory with one planted violation of `kind`.
// Throws Error(kInvalidTrajectory) if `trajectory` has violations and
// Error(kUnsupportedKind) when the shape cannot host the kind.
std::string mutate(const Trajectory& trajectory, ViolationKind kind, std::uint64_t seed);

}  // namespace thinkact::protocol
