#pragma once

// Declarative model descriptions, the builders for the architectures used in
// the experiments, and the runtime network that interprets them (eval-only
// and autodiff forward passes).

#include <map>
#include <string>
#include <vector>

#include "rrelu/autodiff.hpp"
#include "rrelu/tensor.hpp"

namespace rrelu {

enum class LayerKind {
    Flatten,
    Linear,
    Conv,
    BatchNorm,
    ActReLU,
    ActRReLU,
    ResidualSave,
    ResidualAdd,
    DownsamplePad,    // standalone stage-transition shortcut of a removed unit
    ChannelScatter,   // compacted channels scattered back to full width
    GlobalAvgPool,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s);

struct LayerDef {
    LayerKind kind;
    std::string name;  // parameter prefix for parameterized layers
    // linear / conv
    std::size_t in = 0, out = 0, k = 0, stride = 1, pad = 0;
    bool bias = false;
    // residual add / downsample pad
    std::size_t skip_stride = 1, skip_pad_channels = 0;
    // channel scatter
    std::vector<std::size_t> map;
    std::size_t full_width = 0;
};

struct ModelSpec {
    std::vector<LayerDef> layers;
    std::string activation;  // "relu" | "rrelu"
    std::size_t num_classes = 0;
    std::vector<std::size_t> input_shape;  // {D} for FCNN, {C,H,W} for CNN
};

// Builders ------------------------------------------------------------------

ModelSpec build_fcnn(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                     std::size_t num_classes, const std::string& activation);

ModelSpec build_resnet(std::size_t units_per_block, const std::vector<std::size_t>& widths,
                       std::size_t num_classes, const std::string& activation);

ModelSpec build_wrn(std::size_t depth, std::size_t widen_factor, std::size_t num_classes,
                    const std::string& activation);

// Parse a model name like "fcnn-784-500-10", "resnet20" or "wrn-16-4".
ModelSpec build_named_model(const std::string& name, std::size_t num_classes,
                            const std::string& activation);

// Runtime network ------------------------------------------------------------

struct Network {
    ModelSpec spec;
    std::map<std::string, Tensorf> params;   // trainable tensors
    std::map<std::string, Tensorf> buffers;  // batch-norm running statistics
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;

    static Network build(ModelSpec spec);  // allocate zero-valued parameters

    // Evaluation forward (batch-norm uses stored statistics).
    Tensorf forward_eval(const Tensorf& x) const;

    struct Graph {
        ad::Varf logits;
        std::map<std::string, ad::Varf> leaves;  // one per parameter
    };
    // Autodiff forward.  train_mode drives batch-norm (and updates the
    // running statistics in-place); the two trainable flags pick which
    // parameter groups get gradients.
    Graph forward_ad(const Tensorf& x, bool train_mode, bool train_weights, bool train_slopes);

    std::size_t param_count() const;  // trainable scalars, all groups
    std::vector<std::string> rrelu_layer_names() const;
    bool has_rrelu() const { return !rrelu_layer_names().empty(); }
};

// Number of residual units present in a spec.
std::size_t count_residual_units(const ModelSpec& spec);

// JSON round trip for specs (used by checkpoints and the CLI config).
std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& json_text);

}  // namespace rrelu
