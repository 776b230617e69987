use rand::Rng;
use serde_json::{json, Map, Value};

const AZS: [&str; 3] = ["us-east-1a", "us-east-1b", "us-east-1c"];
const INSTANCE_TYPES: [&str; 4] = ["t2.micro", "t3.small", "t3.medium", "m5.large"];

/// A lint-clean VPC-centred template whose size varies with `rng`.
///
/// Every resource type used here is covered by the builtin schemas, and
/// every literal property is a potential defect site.
pub fn base_template<R: Rng + ?Sized>(rng: &mut R, description: &str) -> Value {
    let subnets = rng.random_range(2..=4);
    let instances = rng.random_range(1..=2);
    let mut resources = Map::new();

    resources.insert(
        "VPC".into(),
        json!({
            "Type": "AWS::EC2::VPC",
            "Properties": {
                "CidrBlock": "10.0.0.0/16",
                "EnableDnsSupport": true,
                "EnableDnsHostnames": true,
                "InstanceTenancy": "default",
                "Tags": [{"Key": "Environment", "Value": {"Ref": "EnvironmentName"}}]
            }
        }),
    );
    for i in 0..subnets {
        resources.insert(
            format!("PrivateSubnet{}", i + 1),
            json!({
                "Type": "AWS::EC2::Subnet",
                "Properties": {
                    "VpcId": {"Ref": "VPC"},
                    "CidrBlock": format!("10.0.{}.0/24", i + 1),
                    "AvailabilityZone": AZS[i % AZS.len()],
                    "MapPublicIpOnLaunch": false
                }
            }),
        );
    }
    resources.insert("InternetGateway".into(), json!({"Type": "AWS::EC2::InternetGateway"}));
    resources.insert(
        "GatewayAttachment".into(),
        json!({
            "Type": "AWS::EC2::VPCGatewayAttachment",
            "Properties": {"VpcId": {"Ref": "VPC"}, "InternetGatewayId": {"Ref": "InternetGateway"}}
        }),
    );
    resources.insert(
        "PrivateRouteTable".into(),
        json!({"Type": "AWS::EC2::RouteTable", "Properties": {"VpcId": {"Ref": "VPC"}}}),
    );
    resources.insert(
        "InstanceSecurityGroup".into(),
        json!({
            "Type": "AWS::EC2::SecurityGroup",
            "Properties": {
                "GroupDescription": "Allow HTTPS from inside the VPC",
                "GroupName": "private-https",
                "VpcId": {"Ref": "VPC"},
                "SecurityGroupIngress": [
                    {"IpProtocol": "tcp", "FromPort": 443, "ToPort": 443, "CidrIp": "10.0.0.0/16"}
                ]
            }
        }),
    );
    for i in 0..instances {
        let instance_type = INSTANCE_TYPES[rng.random_range(0..INSTANCE_TYPES.len())];
        resources.insert(
            format!("AppInstance{}", i + 1),
            json!({
                "Type": "AWS::EC2::Instance",
                "Properties": {
                    "ImageId": "ami-0ff8a91507f77f867",
                    "InstanceType": instance_type,
                    "KeyName": "ops-key",
                    "SubnetId": {"Ref": format!("PrivateSubnet{}", i % subnets + 1)},
                    "Monitoring": false,
                    "Tenancy": "default",
                    "EbsOptimized": false
                }
            }),
        );
    }
    resources.insert(
        "ArtifactBucket".into(),
        json!({
            "Type": "AWS::S3::Bucket",
            "Properties": {
                "BucketName": "app-artifacts",
                "AccessControl": "Private",
                "ObjectLockEnabled": false
            }
        }),
    );
    let subnet_refs: Vec<Value> = (1..=subnets)
        .map(|i| json!({"Ref": format!("PrivateSubnet{i}")}))
        .collect();
    resources.insert(
        "CloudFormationEndpoint".into(),
        json!({
            "Type": "AWS::EC2::VPCEndpoint",
            "Properties": {
                "VpcId": {"Ref": "VPC"},
                "ServiceName": "com.amazonaws.us-east-1.cloudformation",
                "VpcEndpointType": "Interface",
                "PrivateDnsEnabled": true,
                "SubnetIds": subnet_refs,
                "SecurityGroupIds": [{"Ref": "InstanceSecurityGroup"}]
            }
        }),
    );

    json!({
        "AWSTemplateFormatVersion": "2010-09-09",
        "Description": description,
        "Parameters": {
            "EnvironmentName": {"Type": "String", "Default": "dev"}
        },
        "Resources": resources
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::json::parse_located;
    use crate::lint::{lint_template, LintOptions};
    use crate::schema::builtin_core_schemas;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn base_templates_lint_clean() {
        let store = builtin_core_schemas();
        for seed in 0..32 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = base_template(&mut rng, "a \"quoted\" description");
            let text = serde_json::to_string_pretty(&t).unwrap();
            let root = parse_located(&text).unwrap();
            let report = lint_template(
                &root,
                &store,
                LintOptions {
                    strict_unknown_types: true,
                },
            );
            assert!(report.is_empty(), "seed {seed}: {report:?}");
        }
    }
}
