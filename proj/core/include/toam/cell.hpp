#pragma once
//
// Tagged one-word term cells.
//
// Every term is a 64-bit cell.  The low bits carry the tag:
//
//   ......01  Int   62-bit signed integer, value in the upper 62 bits
//   ......11  Atm   interned symbol id of an arity-0 symbol
//   ....0000  Ref   cell address; a cell whose Ref points at itself is a
//                   free variable
//   ....0010  Susp  free variable with a watcher list; payload is an index
//                   into the machine's suspension registry
//   ....0100  Str   address of a structure block on the heap
//                   (functor cell followed by the argument cells)
//   ....0110  Lst   address of a 2-cell head/tail block on the heap
//   ....1000  Flt   address of a boxed float: functor cell + two payload
//                   cells holding the raw double halves
//   ....1010  Fun   functor record: interned symbol id of name/arity;
//                   appears only as the first cell of a heap block
//
// Addresses are indices into the machine's cell arena (heap low, stack
// high); index 0 is never a valid cell, so 0 doubles as a null address.

#include <cstdint>

namespace toam {

using Cell = std::uint64_t;
using Addr = std::uint32_t;

enum class Tag : std::uint8_t {
  Ref = 0,
  Susp = 1,
  Str = 2,
  Lst = 3,
  Flt = 4,
  Fun = 5,
  Atm = 6,
  Int = 7,
};

constexpr std::int64_t kIntMin = -(std::int64_t(1) << 61);
constexpr std::int64_t kIntMax = (std::int64_t(1) << 61) - 1;

constexpr bool int_fits(std::int64_t v) { return v >= kIntMin && v <= kIntMax; }

constexpr Tag tag(Cell c) {
  switch (c & 3u) {
    case 1u: return Tag::Int;
    case 3u: return Tag::Atm;
    default: return Tag((c >> 1) & 7u);
  }
}

constexpr Cell make_int(std::int64_t v) { return (Cell(v) << 2) | 1u; }
constexpr std::int64_t int_val(Cell c) { return std::int64_t(c) >> 2; }

constexpr Cell make_atom(std::uint32_t sym) { return (Cell(sym) << 2) | 3u; }
constexpr std::uint32_t atom_sym(Cell c) { return std::uint32_t(c >> 2); }

constexpr Cell make_tagged(Tag t, std::uint64_t payload) {
  return (payload << 4) | (Cell(std::uint8_t(t)) << 1);
}
constexpr std::uint64_t payload(Cell c) { return c >> 4; }

constexpr Cell make_ref(Addr a) { return make_tagged(Tag::Ref, a); }
constexpr Cell make_susp(std::uint32_t idx) { return make_tagged(Tag::Susp, idx); }
constexpr Cell make_str(Addr a) { return make_tagged(Tag::Str, a); }
constexpr Cell make_lst(Addr a) { return make_tagged(Tag::Lst, a); }
constexpr Cell make_flt(Addr a) { return make_tagged(Tag::Flt, a); }
constexpr Cell make_fun(std::uint32_t sym) { return make_tagged(Tag::Fun, sym); }

constexpr Addr ref_addr(Cell c) { return Addr(payload(c)); }
constexpr std::uint32_t susp_idx(Cell c) { return std::uint32_t(payload(c)); }
constexpr std::uint32_t fun_sym(Cell c) { return std::uint32_t(payload(c)); }

constexpr bool is_ref(Cell c) { return tag(c) == Tag::Ref; }
constexpr bool is_susp(Cell c) { return tag(c) == Tag::Susp; }
constexpr bool is_atom(Cell c) { return tag(c) == Tag::Atm; }
constexpr bool is_int(Cell c) { return tag(c) == Tag::Int; }

// A cell is "free" when it is an unbound variable occupying address a.
constexpr bool is_self_ref(Cell c, Addr a) { return is_ref(c) && ref_addr(c) == a; }
constexpr bool is_free_cell(Cell c, Addr a) { return is_self_ref(c, a) || is_susp(c); }

}  // namespace toam
