#pragma once

#include <string>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

enum class NodeKind {
    Conv,
    Relu,
    MaxPool,
    AvgPool,
    BatchNorm,
    ChannelSampler,
    ResidualBegin,
    ResidualAdd,
};

const char* node_kind_name(NodeKind k);
NodeKind node_kind_from_name(const std::string& s);

/// One tagged graph node. Only the fields relevant to `kind` are used.
struct Node {
    NodeKind kind = NodeKind::Relu;
    std::string name;

    // Conv: weights n x c x kh x kw, optional bias of length n.
    Tensor4 weights;
    std::vector<float> bias;
    bool has_bias = false;

    // Conv and pool hyperparameters.
    i64 kh = 0, kw = 0;    // pool kernel (conv kernel lives in weights dims)
    i64 sh = 1, sw = 1;
    i64 ph = 0, pw = 0;

    // BatchNorm parameters, all length C.
    std::vector<float> gamma, beta, mean, var;
    float eps = 1e-5f;

    // ChannelSampler: strictly increasing retained input channel indices.
    std::vector<i64> indices;

    // ResidualAdd: name of the matching ResidualBegin.
    std::string begin_name;

    i64 out_channels() const { return weights.dims[0]; }
    i64 in_channels() const { return weights.dims[1]; }
};

struct ShapeCHW {
    i64 c = 0, h = 0, w = 0;
    bool operator==(const ShapeCHW&) const = default;
};

/// Ordered node list defining the network, executed front to back.
/// Residual blocks are bracketed by ResidualBegin/ResidualAdd pairs with
/// identity shortcuts.
struct ModelGraph {
    std::vector<Node> nodes;
    ShapeCHW input_shape;

    /// Index of the node with the given name, or throws LookupError.
    i64 find(const std::string& name) const;
    bool contains(const std::string& name) const;

    /// Shape of the feature map entering node i (i == nodes.size() gives
    /// the model output shape).
    ShapeCHW shape_before(i64 i) const;

    /// Checks all structural invariants; throws StructureError/ShapeError.
    void validate() const;
};

/// Shape produced by one node on the given input shape.
ShapeCHW node_output_shape(const Node& n, const ShapeCHW& in);

/// What produces the feature map a conv node reads.
enum class InputSource {
    ModelInput,  // the network input itself
    PlainConv,   // a conv reachable through channel-wise nodes; its filters
                 // can be removed together with this conv's input channels
    BlockShared, // the shared input of a residual block (shortcut forbids
                 // filter removal; feature map sampling applies)
    AddOutput,   // output of a residual add
};

struct ConvContext {
    InputSource source = InputSource::ModelInput;
    i64 producer = -1;       // conv node index when source == PlainConv
    i64 sampler_before = -1; // existing ChannelSampler directly upstream, or -1
};

/// Classifies the input of the conv at node index `conv_idx`.
ConvContext analyze_conv_input(const ModelGraph& g, i64 conv_idx);

/// Consumer of a conv node's output feature map.
struct ConvConsumer {
    enum class Kind { None, Conv, Shared } kind = Kind::None;
    i64 conv_idx = -1; // when kind == Conv
};

ConvConsumer analyze_conv_output(const ModelGraph& g, i64 conv_idx);

/// Indices of all conv nodes in execution order.
std::vector<i64> conv_indices(const ModelGraph& g);

/// For a ResidualBegin node, indices of the conv nodes on the branch
/// between begin and its matching add (in order). Throws StructureError
/// if `block` does not name a ResidualBegin.
std::vector<i64> branch_convs(const ModelGraph& g, const std::string& block);

/// Index of the ResidualAdd matching the given ResidualBegin index.
i64 matching_add(const ModelGraph& g, i64 begin_idx);

} // namespace prunekit
