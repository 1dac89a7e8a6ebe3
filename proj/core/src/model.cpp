#include "viteraser/model.hpp"

namespace viteraser {

ViTEraserImpl::ViTEraserImpl(const ModelConfig& config) : config_(config) {
  require_valid(config);
  encoder = register_module("encoder", Encoder(config));
  decoder = register_module("decoder", Decoder(config));
  seg_head = register_module("seg_head", SegHead(config.enc_channels[3]));
  recon_head = register_module("recon_head", ReconHead(config.dec_channels(4)));
}

DecoderOutput ViTEraserImpl::forward(const torch::Tensor& image, bool auxiliary) {
  return decoder->forward(encoder->forward(image), auxiliary);
}

PretrainOutput ViTEraserImpl::pretrain_forward(const torch::Tensor& masked_image,
                                               const torch::Tensor& mim_mask) {
  auto enc = encoder->forward(masked_image, mim_mask);
  PretrainOutput out;
  out.segmentation = seg_head->forward(enc.features[3]);
  auto dec = decoder->forward(enc, /*auxiliary=*/false);
  out.reconstruction = recon_head->forward(dec.features[4]);
  return out;
}

torch::Tensor ViTEraserImpl::segment(const torch::Tensor& image) {
  return seg_head->forward(encoder->forward(image).features[3]);
}

std::vector<torch::Tensor> ViTEraserImpl::encoder_parameters() const {
  return encoder->parameters();
}

std::vector<torch::Tensor> ViTEraserImpl::decoder_parameters() const {
  return decoder->parameters();
}

}  // namespace viteraser
