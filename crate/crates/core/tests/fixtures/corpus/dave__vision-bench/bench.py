import timm
from torchvision.models import resnet18 as r18

backbone = timm.create_model("resnet50", pretrained=True)
scratch = timm.create_model("vit_base_patch16_224")
baseline = r18(weights="IMAGENET1K_V1")
